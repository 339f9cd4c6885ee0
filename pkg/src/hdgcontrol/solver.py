"""Solvers for the discrete optimality system and its state/adjoint parts."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import (
    DofLayout, assemble_form_matrix, assemble_global,
    coupled_blocks, element_chunks, element_terms, form_layout_size,
)
from .basis import project_edges
from .errors import ConfigurationError, SolverError
from .mesh import Mesh
from .problem import ProblemData
from .sparse import Factorization, finalize, nested_dissection

log = logging.getLogger(__name__)


@dataclass
class Solution:
    """Discrete optimal state, adjoint and control.

    Shapes: ``q, p`` (nT, 2, nb); ``y, z`` (nT, nb); ``yhat, zhat``
    (n_interior_edges, ne); ``u`` (n_boundary_edges, ne). Trace and control
    rows follow ``mesh.interior_edges`` and ``mesh.boundary_edges``.
    """

    mesh: Mesh
    data: ProblemData
    q: np.ndarray
    y: np.ndarray
    yhat: np.ndarray
    p: np.ndarray
    z: np.ndarray
    zhat: np.ndarray
    u: np.ndarray
    vector: np.ndarray = field(repr=False)
    layout: DofLayout = field(repr=False)
    relative_residual: float = float("nan")
    method: str = ""

    @classmethod
    def from_vector(cls, mesh, data, layout: DofLayout, x, **kw) -> "Solution":
        nb = layout.nb
        local = x[:layout.trace_offset].reshape(mesh.n_elements, 6 * nb)
        return cls(
            mesh=mesh, data=data,
            q=local[:, :2 * nb].reshape(-1, 2, nb).copy(),
            y=local[:, 2 * nb:3 * nb].copy(),
            p=local[:, 3 * nb:5 * nb].reshape(-1, 2, nb).copy(),
            z=local[:, 5 * nb:].copy(),
            yhat=x[layout.trace_dofs("yhat")],
            zhat=x[layout.trace_dofs("zhat")],
            u=x[layout.control_dofs()],
            vector=np.asarray(x), layout=layout, **kw,
        )


def _relative_residual(A, x, b) -> float:
    r = np.linalg.norm(A @ x - b)
    nb = np.linalg.norm(b)
    return float(r / nb) if nb > 0 else float(r)


@dataclass
class CondensedSystem:
    """Trace/control system left after eliminating element unknowns.

    Element unknowns are recovered as ``offset - operator @ slot_values``.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    layout: DofLayout
    slot_dofs: np.ndarray   # (nT, 9 ne) global index, -1 where absent
    offset: np.ndarray      # (nT, 6 nb)
    operator: np.ndarray    # (nT, 6 nb, 9 ne)

    def recover(self, traces: np.ndarray) -> np.ndarray:
        """Full solution vector from the condensed unknowns."""
        layout = self.layout
        full = np.zeros(layout.total)
        full[layout.trace_offset:] = traces
        slots = np.where(self.slot_dofs >= 0, full[np.maximum(self.slot_dofs, 0)], 0.0)
        local = self.offset - np.einsum("tij,tj->ti", self.operator, slots)
        full[:layout.trace_offset] = local.ravel()
        return full


def _local_solve(A, rhs, elements):
    try:
        return np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        conds = np.linalg.cond(A)
        bad = elements[int(np.argmax(conds))]
        raise SolverError(f"local block of element {bad} is numerically singular") from None


def static_condense(mesh: Mesh, data: ProblemData, a3: str = "error") -> CondensedSystem:
    """Eliminate (q, y, p, z) elementwise; the state-adjoint coupling keeps
    them in one local block."""
    data.validate(mesh, a3=a3)
    layout = DofLayout.build(mesh, data.k)
    nL, ne = layout.n_local, layout.ne
    off = layout.trace_offset
    n = layout.n_condensed
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    slot_all = np.empty((mesh.n_elements, 9 * ne), dtype=np.int64)
    offset = np.empty((mesh.n_elements, nL))
    operator = np.empty((mesh.n_elements, nL, 9 * ne))
    for chunk in element_chunks(mesh.n_elements):
        K, F = coupled_blocks(element_terms(mesh, data, chunk), data)
        A, B = K[:, :nL, :nL], K[:, :nL, nL:]
        C, D = K[:, nL:, :nL], K[:, nL:, nL:]
        sol = _local_solve(A, np.concatenate([B, F[:, :nL, None]], axis=2), chunk)
        AinvB, Ainvb = sol[:, :, :-1], sol[:, :, -1]
        S = D - C @ AinvB
        g = F[:, nL:] - np.einsum("tij,tj->ti", C, Ainvb)

        dofs = layout.slot_dofs(mesh, chunk)
        slot_all[chunk] = dofs
        offset[chunk] = Ainvb
        operator[chunk] = AinvB
        valid = dofs >= 0
        mask = valid[:, :, None] & valid[:, None, :]
        rows.append(np.broadcast_to(dofs[:, :, None], S.shape)[mask] - off)
        cols.append(np.broadcast_to(dofs[:, None, :], S.shape)[mask] - off)
        vals.append(S[mask])
        np.add.at(rhs, dofs[valid] - off, g[valid])
    M = finalize(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (n, n))
    return CondensedSystem(M, rhs, layout, slot_all, offset, operator)


def condensed_ordering(mesh: Mesh, layout: DofLayout) -> np.ndarray | None:
    """Nested dissection of the condensed unknowns by their edge midpoints."""
    if mesh.level is None:
        return None
    edge_of = np.empty(layout.n_condensed, dtype=np.int64)
    off = layout.trace_offset
    for field_, edges in (("yhat", mesh.interior_edges), ("zhat", mesh.interior_edges)):
        edge_of[(layout.trace_dofs(field_) - off).ravel()] = np.repeat(edges, layout.ne)
    edge_of[(layout.control_dofs() - off).ravel()] = np.repeat(mesh.boundary_edges, layout.ne)
    mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    grid = np.round(2 * mid * 2 ** mesh.level) / 2
    return nested_dissection(grid[edge_of])


def solve_optimal_control(mesh: Mesh, data: ProblemData, method: str = "condensed",
                          a3: str = "error") -> Solution:
    """Solve the coupled state/adjoint/optimality system in one linear solve."""
    if method == "monolithic":
        system = assemble_global(mesh, data, a3=a3)
        x = Factorization(system.matrix).solve(system.rhs)
        res = _relative_residual(system.matrix, x, system.rhs)
        layout = system.layout
    elif method == "condensed":
        cs = static_condense(mesh, data, a3=a3)
        lu = Factorization(cs.matrix, ordering=condensed_ordering(mesh, cs.layout))
        traces = lu.solve(cs.rhs)
        res = _relative_residual(cs.matrix, traces, cs.rhs)
        x = cs.recover(traces)
        layout = cs.layout
    else:
        raise ConfigurationError(f"unknown method {method!r}", "method")
    log.debug("level %s, %s solve: %d dofs, residual %.2e", mesh.level, method, layout.total, res)
    return Solution.from_vector(mesh, data, layout, x, relative_residual=res, method=method)


# ---------------------------------------------------------------------------
# decoupled state and adjoint solves (form layout: [q, y] per element, traces)

def _boundary_terms(mesh: Mesh, data: ProblemData):
    """Owner element, local edge index, and the element terms for every boundary edge."""
    bedges = mesh.boundary_edges
    owners = mesh.edge_elements[bedges, 0]
    local = np.argmax(mesh.element_edges[owners] == bedges[:, None], axis=1)
    terms = element_terms(mesh, data, owners)
    return owners, local, terms


def control_coupling(mesh: Mesh, data: ProblemData) -> sp.csr_matrix:
    """Operator ``u -> <u, tau2 w + r.n>`` into the state rows of the form layout."""
    nb, ne = (data.k + 1) * (data.k + 2) // 2, data.k + 1
    owners, local, terms = _boundary_terms(mesh, data)
    idx = np.arange(len(owners))
    blocks = np.concatenate([
        terms.cross_n[idx, local, 0], terms.cross_n[idx, local, 1],
        terms.cross_tau2[idx, local],
    ], axis=1)                                                    # (nEb, 3 nb, ne)
    rows = owners[:, None] * 3 * nb + np.arange(3 * nb)
    cols = idx[:, None] * ne + np.arange(ne)
    R = np.broadcast_to(rows[:, :, None], blocks.shape)
    C = np.broadcast_to(cols[:, None, :], blocks.shape)
    return finalize(R.ravel(), C.ravel(), blocks.ravel(),
                    (form_layout_size(mesh, data.k), ne * len(owners)))


def _element_loads(mesh, data):
    nb = (data.k + 1) * (data.k + 2) // 2
    f = np.empty((mesh.n_elements, nb))
    yd = np.empty((mesh.n_elements, nb))
    mass = np.empty((mesh.n_elements, nb, nb))
    for chunk in element_chunks(mesh.n_elements):
        t = element_terms(mesh, data, chunk)
        f[chunk], yd[chunk], mass[chunk] = t.load_f, t.load_yd, t.mass
    return f, yd, mass


def _split_form_vector(mesh, k, x):
    nb = (k + 1) * (k + 2) // 2
    local = x[:3 * nb * mesh.n_elements].reshape(mesh.n_elements, 3 * nb)
    flux = local[:, :2 * nb].reshape(-1, 2, nb).copy()
    scalar = local[:, 2 * nb:].copy()
    trace = x[3 * nb * mesh.n_elements:].reshape(-1, k + 1).copy()
    return flux, scalar, trace


def _scatter_scalar(mesh, k, values):
    nb = (k + 1) * (k + 2) // 2
    out = np.zeros(form_layout_size(mesh, k))
    idx = np.arange(mesh.n_elements)[:, None] * 3 * nb + 2 * nb + np.arange(nb)
    out[idx] = values
    return out


def solve_state(mesh: Mesh, data: ProblemData, u, a3: str = "error"):
    """State solve for a given control.

    ``u`` is either boundary coefficients (n_boundary_edges, ne) or a
    callable ``u(x, y)`` that is projected edgewise. Returns
    ``(q, y, yhat)``.
    """
    data.validate(mesh, a3=a3)
    if callable(u):
        u = project_edges(u, mesh, data.k, mesh.boundary_edges)
    u = np.asarray(u, dtype=float)
    if u.shape != (len(mesh.boundary_edges), data.k + 1):
        raise ValueError(f"control has shape {u.shape}, expected "
                         f"{(len(mesh.boundary_edges), data.k + 1)}")
    A = assemble_form_matrix(mesh, data, "B1")
    f, _, _ = _element_loads(mesh, data)
    b = -_scatter_scalar(mesh, data.k, f) - control_coupling(mesh, data) @ u.ravel()
    x = Factorization(A).solve(b)
    res = _relative_residual(A, x, b)
    if res > 1e-9:
        raise SolverError(f"state solve residual {res:.2e} too large")
    return _split_form_vector(mesh, data.k, x)


def solve_adjoint(mesh: Mesh, data: ProblemData, y_h, a3: str = "error"):
    """Adjoint solve driven by ``y_h - y_d``. Returns ``(p, z, zhat)``."""
    data.validate(mesh, a3=a3)
    nb = (data.k + 1) * (data.k + 2) // 2
    y_h = np.asarray(y_h, dtype=float)
    if y_h.shape != (mesh.n_elements, nb):
        raise ValueError(f"state has shape {y_h.shape}, expected {(mesh.n_elements, nb)}")
    A = assemble_form_matrix(mesh, data, "B2")
    _, yd, mass = _element_loads(mesh, data)
    b = _scatter_scalar(mesh, data.k, yd - np.einsum("tij,tj->ti", mass, y_h))
    x = Factorization(A).solve(b)
    res = _relative_residual(A, x, b)
    if res > 1e-9:
        raise SolverError(f"adjoint solve residual {res:.2e} too large")
    return _split_form_vector(mesh, data.k, x)


def optimality_residual(solution: Solution) -> float:
    """L2(Gamma) norm of ``gamma u + P(p.n + tau2 (z - zhat))``; zhat = 0 on Gamma."""
    mesh, data = solution.mesh, solution.data
    owners, local, terms = _boundary_terms(mesh, data)
    idx = np.arange(len(owners))
    hE = mesh.h_E[mesh.boundary_edges]
    flux = np.einsum("tdj,tdjm->tm", solution.p[owners], terms.cross_n[idx, local])
    react = np.einsum("tj,tjm->tm", solution.z[owners], terms.cross_tau2[idx, local])
    coeff = data.gamma * solution.u + (flux + react) / hE[:, None]
    return float(np.sqrt(np.sum(hE[:, None] * coeff ** 2)))


def optimality_scale(solution: Solution) -> float:
    """``||u_h||_Gamma + ||p_h||_Omega + 1``, the reference size for the residual."""
    mesh = solution.mesh
    hE = mesh.h_E[mesh.boundary_edges]
    u_norm = np.sqrt(np.sum(hE[:, None] * solution.u ** 2))
    p_norm = np.sqrt(np.sum(mesh.areas[:, None, None] * solution.p ** 2))
    return float(u_norm + p_norm + 1.0)

