import dataclasses

import numpy as np
import pytest
import sympy as s
from hypothesis import given, settings, strategies as st

from hdgcontrol.analysis import (
    ConvergenceReport, compare_to_reference, convergence_rates, export_boundary_vtk,
    export_field_vtk, l2_error_boundary, l2_error_domain, read_vtk_scalars, triple_norm,
)
from hdgcontrol.basis import project_edges, project_elements
from hdgcontrol.mesh import build_uniform_mesh
from hdgcontrol.problem import nonsmooth_problem, smooth_problem
from hdgcontrol.solver import solve_optimal_control


@pytest.fixture(scope="module")
def nonsmooth_pair():
    data = nonsmooth_problem(0.01, 1)
    return (solve_optimal_control(build_uniform_mesh(2), data),
            solve_optimal_control(build_uniform_mesh(4), data))


def l2(mesh, coeffs):
    return np.sqrt(np.sum(mesh.areas[:, None] * coeffs.reshape(mesh.n_elements, -1) ** 2))


def test_domain_error_examples():
    mesh = build_uniform_mesh(2)
    c = project_elements(lambda x, y: 2 * x - y, mesh, 1)
    assert l2_error_domain(lambda x, y: 2 * x - y, c, mesh) < 1e-13
    assert l2_error_domain(lambda x, y: 1 + 0 * x, np.zeros((mesh.n_elements, 1)), mesh) == pytest.approx(1.0)


def test_domain_error_p0_of_x_level1():
    mesh = build_uniform_mesh(1)
    c = project_elements(lambda x, y: x, mesh, 0)
    # independent oracle: symbolic integral of (x - mean)^2 over every triangle
    x, y, a, b = s.symbols("x y a b")
    total = 0
    for tri in mesh.vertices[mesh.triangles]:
        p0, p1, p2 = [s.Matrix([s.Rational(str(v[0])), s.Rational(str(v[1]))]) for v in tri]
        X = p0 + a * (p1 - p0) + b * (p2 - p0)
        det = abs((p1 - p0).row_join(p2 - p0).det())
        mean = (p0[0] + p1[0] + p2[0]) / 3
        total += det * s.integrate(s.integrate((X[0] - mean) ** 2, (b, 0, 1 - a)), (a, 0, 1))
    assert l2_error_domain(lambda x, y: x, c, mesh) == pytest.approx(float(s.sqrt(total)), rel=1e-13)


def test_boundary_error_examples():
    mesh = build_uniform_mesh(2)
    u = project_edges(lambda x, y: x * y, mesh, 1, mesh.boundary_edges)
    assert l2_error_boundary(lambda x, y: x * y, u, mesh) < 1e-13
    assert l2_error_boundary(lambda x, y: 1 + 0 * x, np.zeros((16, 2)), mesh) == pytest.approx(2.0)


def test_triple_norm_examples():
    data, _ = smooth_problem(0.25, 1)
    mesh = build_uniform_mesh(1)
    z = np.zeros((mesh.n_elements, 3))
    zt = np.zeros((len(mesh.interior_edges), 2))
    assert triple_norm(np.zeros((mesh.n_elements, 2, 3)), z, zt, mesh, data) == 0.0
    q = np.random.default_rng(0).standard_normal((mesh.n_elements, 2, 3))
    assert triple_norm(q, z, zt, mesh, data) == pytest.approx(2 * l2(mesh, q), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_full_norm_dominates_weak(seed):
    data, _ = smooth_problem(0.01, 1)
    mesh = build_uniform_mesh(1)
    rng = np.random.default_rng(seed)
    q = rng.standard_normal((mesh.n_elements, 2, 3))
    y = rng.standard_normal((mesh.n_elements, 3))
    yh = rng.standard_normal((len(mesh.interior_edges), 2))
    assert triple_norm(q, y, yh, mesh, data, "full") >= triple_norm(q, y, yh, mesh, data, "weak")


def test_norm_homogeneity():
    data, _ = smooth_problem(0.01, 1)
    mesh = build_uniform_mesh(2)
    rng = np.random.default_rng(2)
    q = rng.standard_normal((mesh.n_elements, 2, 3))
    y = rng.standard_normal((mesh.n_elements, 3))
    yh = rng.standard_normal((len(mesh.interior_edges), 2))
    u = rng.standard_normal((16, 2))
    f = lambda x, y: 0 * x
    for c in (-3.0, 0.5, 7.0):
        assert triple_norm(c * q, c * y, c * yh, mesh, data) == pytest.approx(
            abs(c) * triple_norm(q, y, yh, mesh, data), rel=1e-12)
        assert l2_error_domain(f, c * y, mesh) == pytest.approx(abs(c) * l2_error_domain(f, y, mesh), rel=1e-12)
        assert l2_error_boundary(f, c * u, mesh) == pytest.approx(abs(c) * l2_error_boundary(f, u, mesh), rel=1e-12)


def test_triangle_inequality_spot_checks():
    data, _ = smooth_problem(0.01, 1)
    mesh = build_uniform_mesh(2)
    rng = np.random.default_rng(5)
    shapes = [(mesh.n_elements, 2, 3), (mesh.n_elements, 3), (len(mesh.interior_edges), 2)]
    for _ in range(20):
        a = [rng.standard_normal(sh) for sh in shapes]
        b = [rng.standard_normal(sh) for sh in shapes]
        ab = [x + y for x, y in zip(a, b)]
        assert triple_norm(*ab, mesh, data) <= triple_norm(*a, mesh, data) + triple_norm(*b, mesh, data) + 1e-12


def test_convergence_rates_examples():
    assert convergence_rates([4e-2, 1e-2], [0.5, 0.25]) == [None, pytest.approx(2.0)]
    assert round(convergence_rates([6.0299e-2, 1.3188e-2], [0.5, 0.25])[1], 4) == 2.1929
    assert convergence_rates([1e-3, 1e-3], [0.5, 0.25])[1] == 0.0
    assert np.isnan(convergence_rates([1e-3, 0.0], [0.5, 0.25])[1])


def test_report_rows():
    r = ConvergenceReport([1, 2], [0.5, 0.25], [4e-2, 1e-2], [1.0, 0.5], [2.0, 2.0])
    rows = list(r.rows())
    assert rows[0][3] is None and rows[1][3] == pytest.approx(2.0)
    assert rows[1][5] == pytest.approx(1.0) and rows[1][7] == 0.0


def test_compare_to_self_is_zero(nonsmooth_pair):
    coarse, _ = nonsmooth_pair
    d = compare_to_reference(coarse, coarse)
    assert d["y"] <= 1e-14 * l2(coarse.mesh, coarse.y)
    assert d["z"] <= 1e-14 * l2(coarse.mesh, coarse.z)
    assert max(d.values()) < 1e-15


def test_compare_zero_coarse(nonsmooth_pair):
    coarse, fine = nonsmooth_pair
    zero = dataclasses.replace(coarse, **{f: np.zeros_like(getattr(coarse, f))
                                          for f in ("q", "y", "p", "z", "u")})
    d = compare_to_reference(zero, fine)
    assert d["y"] == pytest.approx(l2(fine.mesh, fine.y), rel=1e-12)
    assert d["z"] == pytest.approx(l2(fine.mesh, fine.z), rel=1e-12)
    assert d["q"] == pytest.approx(l2(fine.mesh, fine.q), rel=1e-12)
    hE = fine.mesh.h_E[fine.mesh.boundary_edges]
    assert d["u"] == pytest.approx(np.sqrt(np.sum(hE[:, None] * fine.u ** 2)), rel=1e-12)


def test_compare_symmetric_on_shared_mesh(nonsmooth_pair):
    a, _ = nonsmooth_pair
    rng = np.random.default_rng(1)
    b = dataclasses.replace(a, y=a.y + rng.standard_normal(a.y.shape), u=a.u * 0.5)
    dab, dba = compare_to_reference(a, b), compare_to_reference(b, a)
    for key in dab:
        assert dab[key] == pytest.approx(dba[key], rel=1e-14, abs=0)


def test_compare_matches_error_on_fine_mesh(nonsmooth_pair):
    coarse, fine = nonsmooth_pair
    d = compare_to_reference(coarse, fine)
    assert 0 < d["y"] and 0 < d["u"]


def test_compare_rejects_non_nested(nonsmooth_pair):
    coarse, fine = nonsmooth_pair
    with pytest.raises(ValueError):
        compare_to_reference(fine, coarse)


def test_vtk_field_export(tmp_path):
    mesh = build_uniform_mesh(1)
    ones = np.zeros((mesh.n_elements, 3))
    ones[:, 0] = 1.0
    path = export_field_vtk(ones, mesh, tmp_path / "a.vtk", "y_h")
    text = path.read_text().splitlines()
    assert text[0] == "# vtk DataFile Version 3.0"
    assert "DATASET UNSTRUCTURED_GRID" in text
    assert "CELL_TYPES 8" in text
    i = text.index("CELL_TYPES 8")
    assert text[i + 1:i + 9] == ["5"] * 8
    np.testing.assert_allclose(read_vtk_scalars(path), 1.0, rtol=0, atol=1e-15)
    again = export_field_vtk(ones, mesh, tmp_path / "b.vtk", "y_h")
    assert path.read_bytes() == again.read_bytes()


def test_vtk_p0_cell_data(tmp_path):
    mesh = build_uniform_mesh(1)
    path = export_field_vtk(np.ones((mesh.n_elements, 1)), mesh, tmp_path / "c.vtk")
    text = path.read_text()
    assert "CELL_DATA 8" in text and "POINT_DATA" not in text
    np.testing.assert_allclose(read_vtk_scalars(path), 1.0)


def test_vtk_keeps_discontinuities(tmp_path):
    mesh = build_uniform_mesh(1)
    c = np.zeros((mesh.n_elements, 3))
    c[:, 0] = np.arange(mesh.n_elements)
    vals = read_vtk_scalars(export_field_vtk(c, mesh, tmp_path / "d.vtk"))
    np.testing.assert_allclose(vals, np.repeat(np.arange(8.0), 3))


def test_vtk_boundary_export(tmp_path):
    mesh = build_uniform_mesh(2)
    u = project_edges(lambda x, y: x + y, mesh, 1, mesh.boundary_edges)
    path = export_boundary_vtk(u, mesh, tmp_path / "u.vtk", "u_h")
    text = path.read_text().splitlines()
    assert "CELL_TYPES 16" in text
    pts = np.array([list(map(float, l.split()[:2])) for l in text[5:5 + 32]])
    np.testing.assert_allclose(read_vtk_scalars(path), pts.sum(axis=1), atol=1e-13)
