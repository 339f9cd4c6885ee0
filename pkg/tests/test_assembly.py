import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdgcontrol.assembly import (
    DofLayout, assemble_form_matrix, assemble_global, element_terms, form_layout_size,
    local_B1, local_B2, local_rhs, maxnorm_beta_n, stabilization,
)
from hdgcontrol.basis import edge_basis, simplex_basis
from hdgcontrol.errors import AssumptionViolation
from hdgcontrol.mesh import _from_arrays, build_uniform_mesh
from hdgcontrol.problem import (
    ProblemData, constant_beta, constant_field, rotation_beta, zero_beta, zero_field,
)
from hdgcontrol.sparse import factor_solve


def make_data(beta=None, sigma=0.0, eps=0.01, k=1, f=zero_field, y_d=zero_field):
    return ProblemData(epsilon=eps, gamma=1.0, beta=zero_beta() if beta is None else beta,
                       sigma=constant_field(sigma), f=f, y_d=y_d, k=k)


def interior_element(mesh):
    return int(np.flatnonzero(~mesh.boundary[mesh.element_edges].any(axis=1))[0])


# stabilization ---------------------------------------------------------------

def test_stabilization_example():
    np.testing.assert_allclose(stabilization(1.0, 1.0, 0.01, 0.1), (1.6, 0.6, 1.1), atol=1e-15)


def test_stabilization_pure_diffusion():
    np.testing.assert_allclose(stabilization(0.0, 0.0, 0.01, 0.1), (0.1, 0.1, 0.1), atol=1e-16)


@settings(max_examples=200)
@given(st.floats(-10, 10), st.floats(0, 10), st.floats(1e-8, 1), st.floats(1e-3, 1))
def test_stabilization_identities(bn, extra, eps, h):
    bmax = abs(bn) + extra
    t1, t2, t = stabilization(bn, bmax, eps, h)
    assert abs(t1 - bn - t2) <= 1e-14 * max(1.0, abs(t1))
    assert abs(t - 0.5 * (t1 + t2)) <= 1e-14 * max(1.0, t)
    assert t1 > 0 and t2 > 0 and t > 0


def test_maxnorm_beta_n_reference_triangle():
    mesh = _from_arrays(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))
    expected = [[0, -1], [1 / math.sqrt(2), 1 / math.sqrt(2)], [-1, 0]]
    np.testing.assert_allclose(mesh.normals[0], expected, atol=1e-15)
    assert maxnorm_beta_n(mesh, 0, make_data(constant_beta(1.0, 0.0))) == pytest.approx(1.0)
    assert maxnorm_beta_n(mesh, 0, make_data()) == 0.0


def test_maxnorm_beta_n_constant_independent_of_quadrature():
    mesh = build_uniform_mesh(2)
    data = make_data(constant_beta(0.3, -1.2))
    values = [maxnorm_beta_n(mesh, 5, data.with_(quad_boost=b)) for b in (0, 3, 7)]
    assert max(values) - min(values) < 1e-15


# local forms -----------------------------------------------------------------

def test_local_flux_block_is_area_identity():
    mesh = build_uniform_mesh(2)
    blocks = local_B1(mesh, 3, make_data(eps=1.0, k=0))
    np.testing.assert_allclose(blocks.block("flux", "flux"), mesh.areas[3] * np.eye(2), atol=1e-16)


def test_p0_convection_vanishes():
    mesh = build_uniform_mesh(2)
    terms = element_terms(mesh, make_data(constant_beta(1.0, 2.0), k=0), np.arange(mesh.n_elements))
    assert np.abs(terms.conv).max() == 0.0
    # hence with sigma = 0 the scalar block only carries the stabilization
    b1 = local_B1(mesh, 5, make_data(constant_beta(1.0, 2.0), k=0))
    np.testing.assert_allclose(b1.block("scalar", "scalar"), -terms.bnd_tau1[5], atol=1e-15)


def _edge_energy_independent(mesh, t, y, traces, eps):
    """sum over edges of eps/h_T * ||y - yhat||^2 with a separate Gauss rule."""
    s, w = np.polynomial.legendre.leggauss(6)
    s, w = 0.5 * (s + 1), 0.5 * w
    total = 0.0
    tri = mesh.triangles[t]
    basis = simplex_basis(len(traces[0]) - 1)
    for e in range(3):
        a, b = mesh.vertices[tri[e]], mesh.vertices[tri[(e + 1) % 3]]
        pts = a + s[:, None] * (b - a)
        J = np.column_stack([mesh.vertices[tri[1]] - mesh.vertices[tri[0]],
                             mesh.vertices[tri[2]] - mesh.vertices[tri[0]]])
        ref = np.linalg.solve(J, (pts - mesh.vertices[tri[0]]).T).T
        yv = basis.values(ref) @ y
        # trace parameter runs from the lower to the higher vertex id
        sp = s if tri[e] < tri[(e + 1) % 3] else 1 - s
        yh = edge_basis(len(traces[e]) - 1).values(sp) @ traces[e]
        total += eps / mesh.h_T[t] * np.linalg.norm(b - a) * np.sum(w * (yv - yh) ** 2)
    return total


@pytest.mark.parametrize("k", [0, 1, 2])
def test_local_energy_pure_diffusion(k):
    mesh = build_uniform_mesh(2)
    t = interior_element(mesh)
    eps = 0.05
    blocks = local_B1(mesh, t, make_data(eps=eps, k=k))
    nb, ne = (k + 1) * (k + 2) // 2, k + 1
    assert blocks.matrix.shape == (3 * nb + 3 * ne,) * 2
    rng = np.random.default_rng(k)
    for _ in range(10):
        v = rng.standard_normal(blocks.matrix.shape[0])
        sign = np.ones_like(v)
        sign[2 * nb:] = -1.0
        lhs = (sign * v) @ blocks.matrix @ v
        q = v[:2 * nb]
        rhs = mesh.areas[t] * np.sum(q ** 2) / eps
        rhs += _edge_energy_independent(mesh, t, v[2 * nb:3 * nb],
                                        v[3 * nb:].reshape(3, ne), eps)
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_b2_equals_b1_without_convection_and_reaction():
    mesh = build_uniform_mesh(2)
    data = make_data(eps=0.2)
    for t in (0, 7, interior_element(mesh)):
        np.testing.assert_array_equal(local_B1(mesh, t, data).matrix, local_B2(mesh, t, data).matrix)


@pytest.mark.parametrize("k", [0, 1])
def test_local_transpose_single_element(k):
    mesh = _from_arrays(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))
    data = make_data(constant_beta(0.7, -0.4), sigma=1.0, k=k)
    b1, b2 = local_B1(mesh, 0, data).matrix, local_B2(mesh, 0, data).matrix
    assert np.abs(b1 - b2.T).max() <= 1e-13 * np.abs(b1).max()


def test_local_transpose_interior_element():
    """Away from the trace diagonal blocks the identity holds per element; there
    the forms differ by <beta.n yhat, what>, which cancels between neighbours."""
    mesh = build_uniform_mesh(2)
    data = make_data(constant_beta(0.7, -0.4), sigma=1.0, k=1)
    t = interior_element(mesh)
    b1, b2 = local_B1(mesh, t, data), local_B2(mesh, t, data)
    names = ["flux", "scalar", "trace0", "trace1", "trace2"]
    terms = element_terms(mesh, data, np.array([t]))
    for r in names:
        for c in names:
            diff = b1.block(r, c) - b2.block(c, r).T
            if r == c and r.startswith("trace"):
                e = int(r[-1])
                bn = np.dot([0.7, -0.4], mesh.normals[t, e])
                np.testing.assert_allclose(diff, -bn * terms.trace_mass[0, e], atol=1e-14)
            else:
                assert np.abs(diff).max() <= 1e-13


def test_boundary_traces_dropped():
    mesh = build_uniform_mesh(1)
    blocks = local_B1(mesh, 0, make_data(k=1))
    kept = [e for e, _ in blocks.trace_edges]
    for e in range(3):
        on_boundary = mesh.boundary[mesh.element_edges[0, e]]
        assert (f"trace{e}" in blocks.slices) == (not on_boundary) == (e in kept)


def test_local_rhs_examples():
    mesh = build_uniform_mesh(2)
    t = interior_element(mesh)
    assert np.all(local_rhs(mesh, t, make_data(k=1))["state"] == 0.0)
    one = lambda x, y: 1.0 + 0 * x
    r = local_rhs(mesh, t, make_data(k=0, f=one))
    assert r["state"][0] == pytest.approx(-mesh.areas[t] * simplex_basis(0).values([[0.3, 0.3]])[0, 0])


def test_local_rhs_control_block_pure_diffusion():
    mesh = build_uniform_mesh(2)
    eps = 0.04
    t = 0
    r = local_rhs(mesh, t, make_data(eps=eps, k=0))
    assert set(r["control"]) == {e for e in range(3) if mesh.boundary[mesh.element_edges[t, e]]}
    for e, block in r["control"].items():
        n = mesh.normals[t, e]
        hE = mesh.h_E[mesh.element_edges[t, e]]
        tau = eps / mesh.h_T[t]
        np.testing.assert_allclose(block[:, 0], -hE * np.array([n[0], n[1], tau]), atol=1e-15)


# layout and global assembly --------------------------------------------------

@pytest.mark.parametrize("level, k", [(1, 0), (2, 1), (3, 2)])
def test_layout_partition(level, k):
    mesh = build_uniform_mesh(level)
    layout = DofLayout.build(mesh, k)
    parts = [layout.element_dofs(np.arange(mesh.n_elements)).ravel(), layout.trace_dofs("yhat").ravel(),
             layout.trace_dofs("zhat").ravel(), layout.control_dofs().ravel()]
    allidx = np.concatenate(parts)
    np.testing.assert_array_equal(np.sort(allidx), np.arange(layout.total))
    assert layout.trace_dofs("yhat").shape == (len(mesh.interior_edges), k + 1)
    assert layout.control_dofs().shape == (len(mesh.boundary_edges), k + 1)


def test_dof_count_level1_k0():
    mesh = build_uniform_mesh(1)
    assert DofLayout.build(mesh, 0).total == 72
    system = assemble_global(mesh, make_data(k=0, eps=0.01))
    assert system.matrix.shape == (72, 72) and system.rhs.shape == (72,)


def test_zero_data_zero_solution():
    mesh = build_uniform_mesh(2)
    system = assemble_global(mesh, make_data(constant_beta(1.0, 0.5), sigma=1.0, k=1))
    assert np.all(system.rhs == 0)
    assert np.all(factor_solve(system.matrix, system.rhs) == 0)


def test_assemble_global_checks_assumptions():
    mesh = build_uniform_mesh(2)
    with pytest.raises(AssumptionViolation):
        assemble_global(mesh, make_data(eps=1.0))
    with pytest.raises(AssumptionViolation):
        assemble_global(mesh, make_data(constant_beta(1, 0), sigma=-1.0))


def test_assembly_deterministic():
    mesh = build_uniform_mesh(3)
    data = make_data(rotation_beta(), sigma=1.0, k=1)
    a, b = assemble_global(mesh, data).matrix, assemble_global(mesh, data).matrix
    np.testing.assert_array_equal(a.indptr, b.indptr)
    np.testing.assert_array_equal(a.indices, b.indices)
    np.testing.assert_array_equal(a.data, b.data)


@pytest.mark.parametrize("k", [0, 1])
def test_form_matrix_size_and_symmetry_cases(k):
    mesh = build_uniform_mesh(2)
    data = make_data(k=k, eps=0.1)
    B1 = assemble_form_matrix(mesh, data, "B1")
    nb = (k + 1) * (k + 2) // 2
    n = 3 * nb * mesh.n_elements + (k + 1) * len(mesh.interior_edges)
    assert B1.shape == (n, n) == (form_layout_size(mesh, k),) * 2
    assert abs(B1 - assemble_form_matrix(mesh, data, "B2")).max() == 0.0


@pytest.mark.parametrize("level, k", [(2, 0), (2, 1), (3, 0), (3, 1)])
def test_transpose_identity_polynomial_beta(level, k):
    mesh = build_uniform_mesh(level)
    data = make_data(rotation_beta(), sigma=1.0, k=k)
    B1 = assemble_form_matrix(mesh, data, "B1")
    B2 = assemble_form_matrix(mesh, data, "B2")
    assert abs(B1 - B2.T).max() <= 1e-11 * abs(B1).max()


def test_energy_identity_global():
    from hdgcontrol.invariants import energy_identity
    assert energy_identity(n_vectors=20).passed
