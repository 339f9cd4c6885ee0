"""Structural property checks of the discretization, runnable without pytest.

Each check returns a :class:`CheckResult` with the measured quantity and the
tolerance it was compared against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import energy_terms
from .assembly import assemble_form_matrix
from .basis import project_edges, project_elements
from .mesh import build_uniform_mesh
from .problem import (
    ProblemData, constant_beta, constant_field, nonsmooth_problem, rotation_beta,
    smooth_problem, zero_field,
)
from .solver import (
    _split_form_vector, optimality_residual, optimality_scale, solve_optimal_control, solve_state,
)


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tol)

    def __str__(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.value:.3e} (tol {self.tol:.0e})"


def mesh_consistency(level: int) -> CheckResult:
    """Euler characteristic, edge incidences and outward unit normals."""
    m = build_uniform_mesh(level)
    n = 2 ** level
    bad = 0.0
    bad += abs(len(m.vertices) - m.n_edges + m.n_elements - 1)
    bad += abs(len(m.boundary_edges) - 4 * n)
    bad += np.abs(np.linalg.norm(m.normals, axis=-1) - 1).max()
    mid = 0.5 * (m.vertices[m.triangles] + m.vertices[np.roll(m.triangles, -1, axis=1)])
    outward = np.einsum("tej,tej->te", mid - m.centroids()[:, None, :], m.normals)
    bad += float(np.sum(outward <= 0))
    bad += abs(m.areas.sum() - 1.0)
    return CheckResult(f"mesh consistency, level {level}", float(bad), 1e-12)


def transpose_identity(level: int, k: int) -> CheckResult:
    """max |M_B1 - M_B2^T| relative to max |M_B1| for beta = (y, -x), sigma = 1."""
    data = ProblemData(epsilon=0.05, gamma=1.0, beta=rotation_beta(), sigma=constant_field(1.0),
                       f=zero_field, y_d=zero_field, k=k)
    mesh = build_uniform_mesh(level)
    B1 = assemble_form_matrix(mesh, data, "B1")
    B2 = assemble_form_matrix(mesh, data, "B2")
    diff = abs(B1 - B2.T).max() / abs(B1).max()
    return CheckResult(f"B1 = B2^T, level {level}, k={k}", float(diff), 1e-11)


def energy_identity(n_vectors: int = 100, level: int = 2, k: int = 1, seed: int = 0) -> CheckResult:
    """B1(x; q, -y, -yhat) against eps^-1|q|^2 + |tau^1/2 (y - yhat)|^2 + |sigma_bar^1/2 y|^2."""
    data = ProblemData(epsilon=0.01, gamma=1.0, beta=constant_beta(1.0, 0.5),
                       sigma=constant_field(1.0), f=zero_field, y_d=zero_field, k=k)
    mesh = build_uniform_mesh(level)
    M = assemble_form_matrix(mesh, data, "B1")
    nb = (k + 1) * (k + 2) // 2
    sign = np.ones(M.shape[0])
    local = sign[:3 * nb * mesh.n_elements].reshape(mesh.n_elements, 3 * nb)
    local[:, 2 * nb:] = -1.0
    sign[3 * nb * mesh.n_elements:] = -1.0
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_vectors):
        x = rng.standard_normal(M.shape[0])
        lhs = (sign * x) @ (M @ x)
        q, y, yhat = _split_form_vector(mesh, k, x)
        t = energy_terms(q, y, yhat, mesh, data)
        rhs = t["flux"] + t["jump"] + t["reaction"]
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
    return CheckResult(f"energy identity, {n_vectors} vectors, level {level}", worst, 1e-9)


def polynomial_consistency(level: int = 2, k: int = 1) -> CheckResult:
    """State solve with y = x, beta = (1, 0), sigma = 1, eps = 0.3 is exact."""
    eps = 0.3
    data = ProblemData(epsilon=eps, gamma=1.0, beta=constant_beta(1.0, 0.0),
                       sigma=constant_field(1.0), f=lambda x, y: 1.0 + x,
                       y_d=zero_field, k=k)
    mesh = build_uniform_mesh(level)
    q, y, yhat = solve_state(mesh, data, lambda x, y: x, a3="ignore")
    y_ex = project_elements(lambda x, y: x, mesh, k)
    qx_ex = project_elements(lambda x, y: -eps + 0 * x, mesh, k)
    yhat_ex = project_edges(lambda x, y: x, mesh, k, mesh.interior_edges)
    err = max(np.abs(y - y_ex).max(), np.abs(q[:, 0] - qx_ex).max(), np.abs(q[:, 1]).max(),
              np.abs(yhat - yhat_ex).max())
    return CheckResult(f"polynomial consistency, level {level}, k={k}", float(err), 1e-9)


def _oracle_problem(experiment: str, k: int) -> ProblemData:
    if experiment == "smooth":
        return smooth_problem(1e-7, k)[0]
    return nonsmooth_problem(0.01, k)


def condensation_oracle(level: int, k: int, experiment: str) -> tuple[CheckResult, CheckResult]:
    """Condensed against monolithic solve, plus the optimality residual of both."""
    data = _oracle_problem(experiment, k)
    mesh = build_uniform_mesh(level)
    a = solve_optimal_control(mesh, data, method="condensed", a3="ignore")
    b = solve_optimal_control(mesh, data, method="monolithic", a3="ignore")
    diff = np.linalg.norm(a.vector - b.vector) / np.linalg.norm(b.vector)
    opt = max(optimality_residual(s) / optimality_scale(s) for s in (a, b))
    tag = f"level {level}, k={k}, {experiment}"
    return (CheckResult(f"condensed = monolithic, {tag}", float(diff), 1e-8),
            CheckResult(f"optimality residual, {tag}", float(opt), 1e-9))


def run_all(quick: bool = False) -> list[CheckResult]:
    top = 2 if quick else 4
    out = [mesh_consistency(level) for level in range(1, top + 1)]
    out += [transpose_identity(level, k) for level in ((2,) if quick else (2, 3)) for k in (0, 1)]
    out.append(energy_identity(10 if quick else 100))
    out.append(polynomial_consistency())
    for experiment in ("smooth", "nonsmooth"):
        for k in (0, 1):
            for level in range(1, top + 1):
                out.extend(condensation_oracle(level, k, experiment))
    return out
