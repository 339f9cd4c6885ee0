"""Problem data checked against symbolic differentiation."""

import numpy as np
import pytest
import sympy as s

from hdgcontrol.errors import AssumptionViolation, ConfigurationError
from hdgcontrol.mesh import build_uniform_mesh
from hdgcontrol.problem import (
    SmoothSolution, bubble, constant_field, nonsmooth_problem, experiment_beta, rotation_beta,
    smooth_problem,
)

x1, x2 = s.symbols("x1 x2")
EPS = 1e-3
BETA = s.Matrix([-x1 ** 2 * s.sin(x2), -s.cos(x1) * s.exp(x2)])


def sym_manufactured(eps, sigma):
    y = -eps * s.pi * (s.sin(s.pi * x1) + s.sin(s.pi * x2))
    z = s.sin(s.pi * x1) * s.sin(s.pi * x2)
    lap = lambda v: s.diff(v, x1, 2) + s.diff(v, x2, 2)
    div = lambda v: s.diff(v[0], x1) + s.diff(v[1], x2)
    f = -eps * lap(y) + div(BETA * y) + sigma * y
    yd = y + eps * lap(z) + div(BETA * z) - (div(BETA) + sigma) * z
    return y, z, f, yd


def sample_points(n=40, seed=0):
    return np.random.default_rng(seed).uniform(0, 1, size=(2, n))


def test_experiment_beta_and_divergence():
    beta = experiment_beta()
    X, Y = sample_points()
    bx = s.lambdify((x1, x2), BETA[0])(X, Y)
    by = s.lambdify((x1, x2), BETA[1])(X, Y)
    np.testing.assert_allclose(beta(X, Y)[..., 0], bx, atol=1e-14)
    np.testing.assert_allclose(beta(X, Y)[..., 1], by, atol=1e-14)
    div = s.lambdify((x1, x2), s.diff(BETA[0], x1) + s.diff(BETA[1], x2))(X, Y)
    np.testing.assert_allclose(beta.divergence(X, Y), div, atol=1e-14)


def test_rotation_beta_divergence_free():
    X, Y = sample_points()
    beta = rotation_beta()
    np.testing.assert_allclose(beta(X, Y), np.stack([Y, -X], axis=-1))
    np.testing.assert_allclose(beta.divergence(X, Y), 0.0)


@pytest.mark.parametrize("eps, sigma", [(1e-7, 2.0), (EPS, 3.0), (0.1, 2.0)])
def test_manufactured_data_matches_symbolic(eps, sigma):
    data, exact = smooth_problem(eps, 1, sigma=sigma)
    y, z, f, yd = sym_manufactured(eps, sigma)
    X, Y = sample_points(seed=1)
    for num, sym in [(exact.y, y), (exact.z, z), (data.f, f), (data.y_d, yd)]:
        ref = s.lambdify((x1, x2), sym)(X, Y)
        np.testing.assert_allclose(num(X, Y), ref, rtol=1e-12, atol=1e-14)


def test_manufactured_pair_satisfies_optimality():
    """gamma u - eps dz/dn = 0 on every side for gamma = 1."""
    eps = s.Symbol("eps", positive=True)
    y, z, _, _ = sym_manufactured(eps, 2)
    sides = [(x2, 0, -1), (x1, 1, 1), (x2, 1, 1), (x1, 0, -1)]
    for var, value, sign in sides:
        dzdn = sign * s.diff(z, var)
        assert s.simplify((y - eps * dzdn).subs(var, value)) == 0
    assert SmoothSolution(1e-7).optimality_defect(1.0) < 1e-20
    assert SmoothSolution(1e-7).optimality_defect(2.0) > 1e-7


def test_exact_control_value():
    assert SmoothSolution(1e-7).u(0.5, 0.0) == pytest.approx(-np.pi * 1e-7, rel=1e-14)


def test_bubble_and_nonsmooth_data():
    data = nonsmooth_problem(0.01, 1)
    assert data.f(0.3, 0.4) == 0.0
    assert data.y_d(0.5, 0.5) == pytest.approx(1 / 16)
    assert bubble(0.2, 0.0) == 0.0


def test_sigma_default_satisfies_a1():
    data, _ = smooth_problem(1e-7, 1)
    assert data.min_sigma_bar() > 0
    assert data.beta0() > 0
    assert data.diameter == pytest.approx(np.sqrt(2))


def test_a1_violation():
    data, _ = smooth_problem(1e-7, 1)
    with pytest.raises(AssumptionViolation) as info:
        data.with_(sigma=constant_field(0.0)).validate(build_uniform_mesh(1))
    assert info.value.assumption == "A1"


def test_a3_policies():
    data = nonsmooth_problem(0.5, 1)
    mesh = build_uniform_mesh(2)
    with pytest.raises(AssumptionViolation) as info:
        data.validate(mesh)
    assert info.value.assumption == "A3" and info.value.value == 0.5
    assert len(data.validate(mesh, a3="warn")) == 1
    assert data.validate(mesh, a3="ignore") == []


@pytest.mark.parametrize("field, kw", [("epsilon", dict(epsilon=0.0)), ("gamma", dict(gamma=-1.0)),
                                       ("k", dict(k=4))])
def test_invalid_data(field, kw):
    data, _ = smooth_problem(1e-7, 1)
    with pytest.raises(ConfigurationError) as info:
        data.with_(**kw)
    assert info.value.field == field
