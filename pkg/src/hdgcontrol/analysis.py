"""Error norms, diagnostic norms, convergence rates and field export."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import edge_samples
from .basis import (
    edge_basis, edge_exactness, edge_points, edge_quadrature, element_exactness,
    physical_points, simplex_basis, to_reference, triangle_quadrature,
)
from .mesh import Mesh
from .problem import ProblemData

RATE_DECIMALS = 4


def _degree(coeffs) -> int:
    nb = np.shape(coeffs)[-1]
    k = int(round((math.sqrt(8 * nb + 1) - 3) / 2))
    if (k + 1) * (k + 2) // 2 != nb:
        raise ValueError(f"{nb} coefficients do not match any P_k")
    return k


def evaluate(mesh: Mesh, coeffs: np.ndarray, ref_points: np.ndarray) -> np.ndarray:
    """Values of an element field at reference points, shape (nT, npts)."""
    return np.asarray(coeffs) @ simplex_basis(_degree(coeffs)).values(ref_points).T


def l2_error_domain(exact, coeffs, mesh: Mesh, k: int | None = None,
                    exactness: int | None = None) -> float:
    """``||exact - field||_{L2(Omega)}``; ``exact`` is a callable or a constant."""
    k = _degree(coeffs) if k is None else k
    rule = triangle_quadrature(element_exactness(k) if exactness is None else exactness)
    X = physical_points(mesh, np.arange(mesh.n_elements), rule.points)
    ex = exact(X[..., 0], X[..., 1]) if callable(exact) else exact
    diff = ex - evaluate(mesh, coeffs, rule.points)
    err2 = 2.0 * mesh.areas[:, None] * rule.weights[None, :] * diff ** 2
    return float(np.sqrt(err2.sum()))


def l2_error_boundary(exact, u, mesh: Mesh, k: int | None = None,
                      exactness: int | None = None) -> float:
    """``||exact - u||_{L2(Gamma)}`` with ``u`` given per boundary edge."""
    u = np.asarray(u)
    k = u.shape[-1] - 1 if k is None else k
    rule = edge_quadrature(edge_exactness(k) if exactness is None else exactness)
    bedges = mesh.boundary_edges
    X = edge_points(mesh, bedges, rule.points)
    ex = exact(X[..., 0], X[..., 1]) if callable(exact) else exact
    diff = ex - u @ edge_basis(k).values(rule.points).T
    err2 = mesh.h_E[bedges][:, None] * rule.weights[None, :] * diff ** 2
    return float(np.sqrt(err2.sum()))


def energy_terms(q, y, yhat, mesh: Mesh, data: ProblemData, extra_exactness: int = 2) -> dict:
    """Squared pieces of the weak/full norms, each computed by quadrature.

    Keys: ``flux`` eps^-1 ||q||^2, ``grad`` eps ||grad y||^2, ``jump``
    ||tau^1/2 (y - yhat)||^2 over all element boundaries (yhat = 0 on Gamma),
    ``reaction`` ||sigma_bar^1/2 y||^2, ``mass`` ||y||^2.
    """
    k = data.k
    elements = np.arange(mesh.n_elements)
    basis = simplex_basis(k)
    rule = triangle_quadrature(element_exactness(k, data.quad_boost) + extra_exactness)
    W = 2.0 * mesh.areas[:, None] * rule.weights[None, :]
    phi = basis.values(rule.points)
    X = physical_points(mesh, elements, rule.points)
    qv = np.einsum("tdi,qi->tqd", q, phi)
    yv = y @ phi.T
    Jinv = np.linalg.inv(mesh.jacobians())
    grad = np.einsum("qic,tcd,ti->tqd", basis.gradients(rule.points), Jinv, y)
    sbar = data.sigma_bar(X[..., 0], X[..., 1])

    # element boundary: reuse the stabilization sampling of the assembly
    erule = edge_quadrature(edge_exactness(k, data.quad_boost) + extra_exactness)
    a = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    ref = a[:, None, :] + erule.points[None, :, None] * (np.roll(a, -1, axis=0) - a)[:, None, :]
    y_edge = np.einsum("ti,eqi->teq", y, basis.values(ref.reshape(-1, 2)).reshape(3, -1, basis.dim))
    s = np.where(mesh.edge_signs[:, :, None] > 0, erule.points, 1.0 - erule.points)
    psi = edge_basis(k).values(s.ravel()).reshape(*s.shape, k + 1)      # (t, e, q, m)
    full_trace = np.zeros((mesh.n_edges, k + 1))
    full_trace[mesh.interior_edges] = yhat
    yh_edge = np.einsum("teqm,tem->teq", psi, full_trace[mesh.element_edges])
    _, _, bn_max = edge_samples(mesh, data, elements)
    tau = bn_max + data.epsilon / mesh.h_T
    WE = mesh.h_E[mesh.element_edges][..., None] * erule.weights
    return {
        "flux": float(np.sum(W[..., None] * qv ** 2) / data.epsilon),
        "grad": float(data.epsilon * np.sum(W[..., None] * grad ** 2)),
        "jump": float(np.sum(tau[:, None, None] * WE * (y_edge - yh_edge) ** 2)),
        "reaction": float(np.sum(W * sbar * yv ** 2)),
        "mass": float(np.sum(W * yv ** 2)),
    }


def triple_norm(q, y, yhat, mesh: Mesh, data: ProblemData, variant: str = "weak") -> float:
    """Weak norm, or the full norm with (beta0 + sigma_bar) as reaction weight."""
    t = energy_terms(q, y, yhat, mesh, data)
    total = t["flux"] + t["grad"] + t["jump"] + t["reaction"]
    if variant == "full":
        total += data.beta0() * t["mass"]
    elif variant != "weak":
        raise ValueError(f"unknown variant {variant!r}")
    return float(np.sqrt(max(total, 0.0)))


def convergence_rates(errors, h) -> list:
    """Observed orders ``log(e_{l-1}/e_l) / log(h_{l-1}/h_l)``; ``None`` first,
    ``nan`` where an error is not positive."""
    rates = [None]
    for (e0, e1), (h0, h1) in zip(zip(errors, errors[1:]), zip(h, h[1:])):
        if e0 <= 0 or e1 <= 0:
            rates.append(float("nan"))
        else:
            rates.append(math.log(e0 / e1) / math.log(h0 / h1))
    return rates


# ---------------------------------------------------------------------------
# comparison against a finer nested solution

def _boundary_keys(points, n):
    """Side and cell index along the side for points on the unit square boundary."""
    x, y = points[:, 0], points[:, 1]
    tol = 1e-12
    side = np.select([abs(y) < tol, abs(x - 1) < tol, abs(y - 1) < tol, abs(x) < tol],
                     [0, 1, 2, 3], -1)
    pos = np.select([side == 0, side == 1, side == 2, side == 3], [x, y, x, y])
    if np.any(side < 0):
        raise ValueError("point not on the boundary")
    return side * n + np.minimum(np.floor(pos * n), n - 1).astype(np.int64)


def _coarse_on_fine(coarse_mesh: Mesh, fine_mesh: Mesh, coeffs, ref_points):
    """Coarse element field evaluated at fine-element reference points."""
    parents = coarse_mesh.locate(fine_mesh.centroids())
    X = physical_points(fine_mesh, np.arange(fine_mesh.n_elements), ref_points)
    xi = to_reference(coarse_mesh, parents, X)
    basis = simplex_basis(_degree(coeffs))
    vals = basis.values(xi.reshape(-1, 2)).reshape(*xi.shape[:2], basis.dim)
    return np.einsum("tqi,ti->tq", vals, np.asarray(coeffs)[parents])


def _boundary_on_fine(coarse_mesh: Mesh, fine_mesh: Mesh, u, s_points):
    nc = 2 ** coarse_mesh.level
    cb, fb = coarse_mesh.boundary_edges, fine_mesh.boundary_edges
    cmid = 0.5 * (coarse_mesh.vertices[coarse_mesh.edges[cb, 0]] + coarse_mesh.vertices[coarse_mesh.edges[cb, 1]])
    lookup = np.empty(4 * nc, dtype=np.int64)
    lookup[_boundary_keys(cmid, nc)] = np.arange(len(cb))
    X = edge_points(fine_mesh, fb, s_points)                       # (nfb, q, 2)
    fmid = 0.5 * (fine_mesh.vertices[fine_mesh.edges[fb, 0]] + fine_mesh.vertices[fine_mesh.edges[fb, 1]])
    parent = lookup[_boundary_keys(fmid, nc)]
    a = coarse_mesh.vertices[coarse_mesh.edges[cb[parent], 0]]
    b = coarse_mesh.vertices[coarse_mesh.edges[cb[parent], 1]]
    d = b - a
    s = np.einsum("eqd,ed->eq", X - a[:, None, :], d) / np.einsum("ed,ed->e", d, d)[:, None]
    k = np.shape(u)[-1] - 1
    psi = edge_basis(k).values(s.ravel()).reshape(*s.shape, k + 1)
    return np.einsum("eqm,em->eq", psi, np.asarray(u)[parent])


def compare_to_reference(coarse, reference) -> dict:
    """L2 distances between a coarse solution and a nested finer one.

    Coarse fields are polynomial on each fine element, so the distance is
    computed exactly by fine-mesh quadrature.
    """
    cm, fm = coarse.mesh, reference.mesh
    if cm.level is None or fm.level is None or cm.level > fm.level:
        raise ValueError("compare_to_reference needs nested structured meshes, coarse first")
    k = max(coarse.data.k, reference.data.k)
    rule = triangle_quadrature(2 * k + 2)
    W = 2.0 * fm.areas[:, None] * rule.weights[None, :]
    out = {}
    for name in ("y", "z"):
        cv = _coarse_on_fine(cm, fm, getattr(coarse, name), rule.points)
        fv = evaluate(fm, getattr(reference, name), rule.points)
        out[name] = float(np.sqrt(np.sum(W * (cv - fv) ** 2)))
    for name in ("q", "p"):
        total = 0.0
        for d in range(2):
            cv = _coarse_on_fine(cm, fm, getattr(coarse, name)[:, d], rule.points)
            fv = evaluate(fm, getattr(reference, name)[:, d], rule.points)
            total += np.sum(W * (cv - fv) ** 2)
        out[name] = float(np.sqrt(total))
    erule = edge_quadrature(2 * k + 2)
    cu = _boundary_on_fine(cm, fm, coarse.u, erule.points)
    fu = reference.u @ edge_basis(reference.data.k).values(erule.points).T
    hE = fm.h_E[fm.boundary_edges]
    out["u"] = float(np.sqrt(np.sum(hE[:, None] * erule.weights * (cu - fu) ** 2)))
    return out


# ---------------------------------------------------------------------------
# reports

@dataclass
class ConvergenceReport:
    levels: list
    h_over_sqrt2: list
    err_y: list
    err_z: list
    err_u: list
    metadata: dict = field(default_factory=dict)

    def rates(self, name: str) -> list:
        return convergence_rates(getattr(self, f"err_{name}"), self.h_over_sqrt2)

    def rows(self):
        ry, rz, ru = self.rates("y"), self.rates("z"), self.rates("u")
        for i, level in enumerate(self.levels):
            yield (level, self.h_over_sqrt2[i], self.err_y[i], ry[i],
                   self.err_z[i], rz[i], self.err_u[i], ru[i])


# ---------------------------------------------------------------------------
# VTK legacy output

def _fmt(v: float) -> str:
    return f"{float(v):.10e}"


def export_field_vtk(coeffs, mesh: Mesh, path, name: str = "field") -> Path:
    """Element field as a legacy ASCII unstructured grid.

    P0 fields go to CELL_DATA; higher degrees are sampled at the element
    vertices with unshared points, so discontinuities are kept.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    k = _degree(coeffs)
    nT = mesh.n_elements
    pts = mesh.vertices[mesh.triangles].reshape(-1, 2)
    lines = ["# vtk DataFile Version 3.0", name, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {3 * nT} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in pts]
    lines.append(f"CELLS {nT} {4 * nT}")
    lines += [f"3 {3 * t} {3 * t + 1} {3 * t + 2}" for t in range(nT)]
    lines.append(f"CELL_TYPES {nT}")
    lines += ["5"] * nT
    if k == 0:
        lines += [f"CELL_DATA {nT}", f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [_fmt(v) for v in coeffs[:, 0] * simplex_basis(0).values([[0.0, 0.0]])[0, 0]]
    else:
        vals = evaluate(mesh, coeffs, np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])).ravel()
        lines += [f"POINT_DATA {3 * nT}", f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [_fmt(v) for v in vals]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def export_boundary_vtk(u, mesh: Mesh, path, name: str = "control") -> Path:
    """Boundary field as line cells with unshared endpoints."""
    u = np.asarray(u, dtype=float)
    k = u.shape[-1] - 1
    bedges = mesh.boundary_edges
    nb = len(bedges)
    pts = mesh.vertices[mesh.edges[bedges]].reshape(-1, 2)
    vals = (u @ edge_basis(k).values([0.0, 1.0]).T).ravel()
    lines = ["# vtk DataFile Version 3.0", name, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {2 * nb} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in pts]
    lines.append(f"CELLS {nb} {3 * nb}")
    lines += [f"2 {2 * e} {2 * e + 1}" for e in range(nb)]
    lines.append(f"CELL_TYPES {nb}")
    lines += ["3"] * nb
    lines += [f"POINT_DATA {2 * nb}", f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    lines += [_fmt(v) for v in vals]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk_scalars(path) -> np.ndarray:
    """Scalar values of a file written by the exporters above."""
    lines = Path(path).read_text().splitlines()
    start = next(i for i, l in enumerate(lines) if l.startswith("LOOKUP_TABLE")) + 1
    return np.array([float(v) for v in lines[start:] if v.strip()])
