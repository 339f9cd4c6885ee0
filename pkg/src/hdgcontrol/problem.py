"""Problem data for the Dirichlet boundary control problem.

    min 1/2 ||y - y_d||^2 + gamma/2 ||u||^2_Gamma
    s.t. -eps Lap y + div(beta y) + sigma y = f in Omega,  y = u on Gamma.

Fields are callables ``g(x, y)`` acting elementwise on numpy arrays.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import AssumptionViolation, ConfigurationError

log = logging.getLogger(__name__)

ScalarField = Callable[[np.ndarray, np.ndarray], np.ndarray]

UNIT_SQUARE_DIAMETER = math.sqrt(2.0)


@dataclass(frozen=True)
class VectorField:
    """Velocity field with a closed-form divergence."""

    components: Callable[[np.ndarray, np.ndarray], tuple]
    divergence: ScalarField
    name: str = "custom"

    def __call__(self, x, y) -> np.ndarray:
        bx, by = self.components(x, y)
        shape = np.broadcast(x, y).shape
        return np.stack([np.broadcast_to(bx, shape), np.broadcast_to(by, shape)], axis=-1)


def zero_field(x, y):
    return np.zeros(np.broadcast(x, y).shape)


def constant_field(c: float) -> ScalarField:
    def g(x, y):
        return np.full(np.broadcast(x, y).shape, float(c))
    return g


def experiment_beta() -> VectorField:
    """beta = -(x^2 sin y, cos x e^y) used in both reference experiments."""
    return VectorField(
        components=lambda x, y: (-(x ** 2) * np.sin(y), -np.cos(x) * np.exp(y)),
        divergence=lambda x, y: -2.0 * x * np.sin(y) - np.cos(x) * np.exp(y),
        name="experiment",
    )


def constant_beta(a: float, b: float) -> VectorField:
    return VectorField(
        components=lambda x, y: (np.full(np.shape(x), float(a)), np.full(np.shape(y), float(b))),
        divergence=zero_field,
        name=f"constant:({a:g},{b:g})",
    )


def rotation_beta() -> VectorField:
    """beta = (y, -x), divergence free."""
    return VectorField(components=lambda x, y: (y, -x), divergence=zero_field, name="rotation")


def zero_beta() -> VectorField:
    return constant_beta(0.0, 0.0)


@dataclass(frozen=True)
class ProblemData:
    epsilon: float
    gamma: float
    beta: VectorField
    sigma: ScalarField
    f: ScalarField
    y_d: ScalarField
    k: int
    quad_boost: int = 0
    sigma_label: str = "custom"
    diameter: float = UNIT_SQUARE_DIAMETER
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}", "epsilon")
        if not self.gamma > 0:
            raise ConfigurationError(f"gamma must be positive, got {self.gamma}", "gamma")
        if not 0 <= self.k <= 3:
            raise ConfigurationError(f"k must lie in [0, 3], got {self.k}", "k")
        if self.quad_boost < 0:
            raise ConfigurationError("quad_boost must be nonnegative", "quad_boost")

    def with_(self, **changes) -> "ProblemData":
        return replace(self, **changes)

    def sigma_bar(self, x, y):
        """Effective reaction sigma + div(beta)/2."""
        return self.sigma(x, y) + 0.5 * self.beta.divergence(x, y)

    def beta0(self, n: int = 201) -> float:
        """||beta||_inf / L, sampled on a grid."""
        X, Y = _grid(n)
        return float(np.linalg.norm(self.beta(X, Y), axis=-1).max() / self.diameter)

    def min_sigma_bar(self, n: int = 201) -> float:
        X, Y = _grid(n)
        return float(np.min(self.sigma_bar(X, Y)))

    def validate(self, mesh, a3: str = "error") -> list[str]:
        """Check A1 (sigma_bar >= 0) and A3 (eps < min h_T).

        ``a3`` is ``"error"``, ``"warn"`` or ``"ignore"``. Returns the list of
        warnings issued.
        """
        warnings = []
        smin = self.min_sigma_bar()
        if smin < -1e-10:
            raise AssumptionViolation(
                f"A1 violated: min(sigma + div(beta)/2) = {smin:.6g} < 0", "A1", smin)
        hmin = float(mesh.h_T.min())
        if not self.epsilon < hmin:
            msg = f"A3 violated: epsilon = {self.epsilon:g} >= min h_T = {hmin:.6g}"
            if a3 == "error":
                raise AssumptionViolation(msg, "A3", self.epsilon)
            if a3 == "warn":
                log.warning(msg)
                warnings.append(msg)
        return warnings


def _grid(n):
    t = np.linspace(0.0, 1.0, n)
    return np.meshgrid(t, t)


# ---------------------------------------------------------------------------
# manufactured smooth solution

@dataclass(frozen=True)
class SmoothSolution:
    """Exact state/adjoint pair with y = -eps*pi*(sin(pi x) + sin(pi y)),
    z = sin(pi x) sin(pi y); the control is the trace of y."""

    epsilon: float

    def y(self, x, y):
        return -self.epsilon * np.pi * (np.sin(np.pi * x) + np.sin(np.pi * y))

    def grad_y(self, x, y):
        c = -self.epsilon * np.pi ** 2
        return c * np.cos(np.pi * x), c * np.cos(np.pi * y)

    def lap_y(self, x, y):
        return self.epsilon * np.pi ** 3 * (np.sin(np.pi * x) + np.sin(np.pi * y))

    def z(self, x, y):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    def grad_z(self, x, y):
        return (np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
                np.pi * np.sin(np.pi * x) * np.cos(np.pi * y))

    def lap_z(self, x, y):
        return -2.0 * np.pi ** 2 * self.z(x, y)

    def u(self, x, y):
        return self.y(x, y)

    def q(self, x, y):
        gx, gy = self.grad_y(x, y)
        return -self.epsilon * gx, -self.epsilon * gy

    def p(self, x, y):
        gx, gy = self.grad_z(x, y)
        return -self.epsilon * gx, -self.epsilon * gy

    def source(self, beta: VectorField, sigma: ScalarField) -> ScalarField:
        """f = -eps Lap y + div(beta y) + sigma y."""
        def f(x, y):
            bx, by = beta(x, y)[..., 0], beta(x, y)[..., 1]
            gx, gy = self.grad_y(x, y)
            yy = self.y(x, y)
            return (-self.epsilon * self.lap_y(x, y) + beta.divergence(x, y) * yy
                    + bx * gx + by * gy + sigma(x, y) * yy)
        return f

    def desired_state(self, beta: VectorField, sigma: ScalarField) -> ScalarField:
        """y_d = y + eps Lap z + div(beta z) - (div beta + sigma) z."""
        def y_d(x, y):
            b = beta(x, y)
            gx, gy = self.grad_z(x, y)
            return (self.y(x, y) + self.epsilon * self.lap_z(x, y)
                    + b[..., 0] * gx + b[..., 1] * gy - sigma(x, y) * self.z(x, y))
        return y_d

    def optimality_defect(self, gamma: float, n: int = 101) -> float:
        """max |gamma u - eps dz/dn| over sample points of the boundary."""
        t = np.linspace(0.0, 1.0, n)
        zero, one = np.zeros_like(t), np.ones_like(t)
        sides = [  # (x, y, normal)
            (t, zero, (0.0, -1.0)), (one, t, (1.0, 0.0)),
            (t, one, (0.0, 1.0)), (zero, t, (-1.0, 0.0)),
        ]
        worst = 0.0
        for x, y, (nx, ny) in sides:
            gx, gy = self.grad_z(x, y)
            defect = gamma * self.u(x, y) - self.epsilon * (gx * nx + gy * ny)
            worst = max(worst, float(np.abs(defect).max()))
        return worst


def bubble(x, y):
    """x(1-x) y(1-y)."""
    return x * (1 - x) * y * (1 - y)


def smooth_problem(epsilon: float, k: int, gamma: float = 1.0, sigma: float = 2.0,
                   beta: VectorField | None = None, quad_boost: int = 0):
    """Problem data and exact solution of the manufactured smooth test."""
    beta = experiment_beta() if beta is None else beta
    exact = SmoothSolution(epsilon)
    sig = constant_field(sigma)
    data = ProblemData(
        epsilon=epsilon, gamma=gamma, beta=beta, sigma=sig,
        f=exact.source(beta, sig), y_d=exact.desired_state(beta, sig),
        k=k, quad_boost=quad_boost, sigma_label=f"constant:{sigma:g}",
    )
    return data, exact


def nonsmooth_problem(epsilon: float, k: int, gamma: float = 1.0, sigma: float = 2.0,
                      beta: VectorField | None = None, quad_boost: int = 0) -> ProblemData:
    """f = 0, y_d = x(1-x)y(1-y)."""
    beta = experiment_beta() if beta is None else beta
    return ProblemData(
        epsilon=epsilon, gamma=gamma, beta=beta, sigma=constant_field(sigma),
        f=zero_field, y_d=bubble, k=k, quad_boost=quad_boost,
        sigma_label=f"constant:{sigma:g}",
    )
