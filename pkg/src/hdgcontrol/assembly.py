"""Element matrices and global assembly of the HDG optimality system.

Unknowns per element: flux q (2 * nb), state y (nb), adjoint flux p (2 * nb),
adjoint z (nb). Per interior edge: traces yhat, zhat (ne each). Per boundary
edge: control u (ne). ``nb = dim P_k(T)``, ``ne = dim P_k(E)``.

Every term of the system is an integral over one element or its boundary,
so the whole system is the sum of element contributions. Each element
works on a fixed local layout::

    [qx, qy, y, px, py, z | (yhat, zhat, u) for local edges 0, 1, 2]

and slots that do not exist (traces on boundary edges, controls on interior
edges) are dropped during assembly.

Matrices are stored test-by-trial: entry ``[i, j]`` is the form evaluated
with trial basis function ``j`` and test basis function ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .basis import (
    edge_basis, edge_exactness, edge_quadrature, element_exactness,
    simplex_basis, triangle_quadrature,
)
from .mesh import Mesh
from .problem import ProblemData

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
CHUNK = 8192

YHAT, ZHAT, CONTROL = 0, 1, 2


def stabilization(beta_n: float, beta_n_max: float, epsilon: float, h_T: float):
    """Return ``(tau1, tau2, tau)`` at one edge point.

    ``beta_n`` is beta.n at the point, ``beta_n_max`` the max of |beta.n|
    over the element boundary.
    """
    diffusive = epsilon / h_T
    tau1 = beta_n_max + 0.5 * beta_n + diffusive
    tau2 = beta_n_max - 0.5 * beta_n + diffusive
    return tau1, tau2, beta_n_max + diffusive


@dataclass(frozen=True)
class DofLayout:
    """Global numbering of the coupled system.

    Element blocks ``[q, y, p, z]`` come first, then ``[yhat, zhat]`` per
    interior edge, then ``u`` per boundary edge.
    """

    nb: int
    ne: int
    n_elements: int
    interior_index: np.ndarray   # global edge -> interior position, -1 on boundary
    boundary_index: np.ndarray   # global edge -> boundary position, -1 inside

    @classmethod
    def build(cls, mesh: Mesh, k: int) -> "DofLayout":
        nb = (k + 1) * (k + 2) // 2
        interior_index = -np.ones(mesh.n_edges, dtype=np.int64)
        boundary_index = -np.ones(mesh.n_edges, dtype=np.int64)
        interior_index[mesh.interior_edges] = np.arange(len(mesh.interior_edges))
        boundary_index[mesh.boundary_edges] = np.arange(len(mesh.boundary_edges))
        return cls(nb, k + 1, mesh.n_elements, interior_index, boundary_index)

    @property
    def n_local(self) -> int:
        return 6 * self.nb

    @property
    def n_interior(self) -> int:
        return int((self.interior_index >= 0).sum())

    @property
    def n_boundary(self) -> int:
        return int((self.boundary_index >= 0).sum())

    @property
    def trace_offset(self) -> int:
        return self.n_elements * self.n_local

    @property
    def control_offset(self) -> int:
        return self.trace_offset + 2 * self.ne * self.n_interior

    @property
    def total(self) -> int:
        return self.control_offset + self.ne * self.n_boundary

    @property
    def n_condensed(self) -> int:
        return self.total - self.trace_offset

    def element_slice(self, t: int, field: str) -> slice:
        start = t * self.n_local + {"q": 0, "y": 2, "p": 3, "z": 5}[field] * self.nb
        width = 2 * self.nb if field in ("q", "p") else self.nb
        return slice(start, start + width)

    def element_dofs(self, elements) -> np.ndarray:
        """(n, 6 nb) global indices of element unknowns."""
        return np.asarray(elements)[:, None] * self.n_local + np.arange(self.n_local)

    def slot_dofs(self, mesh: Mesh, elements) -> np.ndarray:
        """(n, 9 ne) global indices of the trace/control slots, -1 where absent."""
        ne = self.ne
        edges = mesh.element_edges[elements]                      # (n, 3)
        inner = self.interior_index[edges]
        bnd = self.boundary_index[edges]
        m = np.arange(ne)
        out = -np.ones((len(edges), 3, 3, ne), dtype=np.int64)
        ok = inner >= 0
        out[:, :, YHAT] = np.where(ok[..., None], self.trace_offset + 2 * ne * inner[..., None] + m, -1)
        out[:, :, ZHAT] = np.where(ok[..., None], self.trace_offset + 2 * ne * inner[..., None] + ne + m, -1)
        okb = bnd >= 0
        out[:, :, CONTROL] = np.where(okb[..., None], self.control_offset + ne * bnd[..., None] + m, -1)
        return out.reshape(len(edges), 9 * ne)

    def trace_dofs(self, field: str) -> np.ndarray:
        """Global indices of all yhat or zhat unknowns, (n_interior, ne)."""
        shift = 0 if field == "yhat" else self.ne
        base = self.trace_offset + 2 * self.ne * np.arange(self.n_interior) + shift
        return base[:, None] + np.arange(self.ne)

    def control_dofs(self) -> np.ndarray:
        base = self.control_offset + self.ne * np.arange(self.n_boundary)
        return base[:, None] + np.arange(self.ne)


@dataclass
class ElementTerms:
    """Integrals shared by every local matrix, batched over elements."""

    mass: np.ndarray         # (n, nb, nb) (phi_j, phi_i)
    mass_sigma: np.ndarray   # (sigma phi_j, phi_i)
    mass_sigma_div: np.ndarray  # ((sigma + div beta) phi_j, phi_i)
    div: np.ndarray          # (n, 2, nb, nb) (d_d phi_i, phi_j)
    conv: np.ndarray         # (n, nb, nb) (beta . grad phi_i, phi_j)
    bnd_tau1: np.ndarray     # (n, nb, nb) <tau1 phi_j, phi_i> over dT
    bnd_tau2: np.ndarray
    cross_tau1: np.ndarray   # (n, 3, nb, ne) <tau1 psi_m, phi_i>_e
    cross_tau2: np.ndarray
    cross_n: np.ndarray      # (n, 3, 2, nb, ne) <n_d psi_m, phi_i>_e
    trace_tau1: np.ndarray   # (n, 3, ne, ne) <tau1 psi_l, psi_m>_e
    trace_tau2: np.ndarray
    trace_mass: np.ndarray   # (n, 3, ne, ne) <psi_l, psi_m>_e
    load_f: np.ndarray       # (n, nb) (f, phi_i)
    load_yd: np.ndarray      # (n, nb) (y_d, phi_i)


def _edge_reference_points(s):
    """Reference coordinates of edge parameters ``s`` on the 3 local edges."""
    a = REF_VERTICES
    b = np.roll(REF_VERTICES, -1, axis=0)
    return a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]      # (3, nq, 2)


def edge_samples(mesh: Mesh, data: ProblemData, elements):
    """Physical edge quadrature points, beta.n there and ||beta.n||_inf per element."""
    rule = edge_quadrature(edge_exactness(data.k, data.quad_boost))
    ref = _edge_reference_points(rule.points)
    v0 = mesh.vertices[mesh.triangles[elements, 0]]
    J = mesh.jacobians()[elements]
    X = v0[:, None, None, :] + np.einsum("tcd,eqd->teqc", J, ref)       # (n, 3, nq, 2)
    bn = np.einsum("teqd,ted->teq", data.beta(X[..., 0], X[..., 1]), mesh.normals[elements])
    return X, bn, np.abs(bn).max(axis=(1, 2))


def maxnorm_beta_n(mesh: Mesh, element: int, data: ProblemData) -> float:
    """||beta.n||_{inf, dT}, sampled at all edge quadrature points of the element."""
    return float(edge_samples(mesh, data, np.array([element]))[2][0])


def element_terms(mesh: Mesh, data: ProblemData, elements) -> ElementTerms:
    elements = np.asarray(elements)
    k, eps = data.k, data.epsilon
    basis, ebasis = simplex_basis(k), edge_basis(k)
    rule = triangle_quadrature(element_exactness(k, data.quad_boost))
    erule = edge_quadrature(edge_exactness(k, data.quad_boost))

    phi = basis.values(rule.points)                                   # (q, i)
    dphi = basis.gradients(rule.points)                               # (q, i, c)
    J = mesh.jacobians()[elements]
    detJ = np.abs(np.linalg.det(J))
    Jinv = np.linalg.inv(J)
    grad = np.einsum("qic,tcd->tqid", dphi, Jinv)
    W = rule.weights[None, :] * detJ[:, None]

    v0 = mesh.vertices[mesh.triangles[elements, 0]]
    X = v0[:, None, :] + np.einsum("tcd,qd->tqc", J, rule.points)
    x, y = X[..., 0], X[..., 1]
    beta = data.beta(x, y)
    div_beta = np.broadcast_to(data.beta.divergence(x, y), x.shape)
    sigma = np.broadcast_to(data.sigma(x, y), x.shape)

    mass = np.einsum("tq,qi,qj->tij", W, phi, phi)
    mass_sigma = np.einsum("tq,qi,qj->tij", W * sigma, phi, phi)
    mass_sigma_div = np.einsum("tq,qi,qj->tij", W * (sigma + div_beta), phi, phi)
    div = np.einsum("tq,tqid,qj->tdij", W, grad, phi)
    conv = np.einsum("tq,tqd,tqid,qj->tij", W, beta, grad, phi)
    load_f = np.einsum("tq,qi->ti", W * np.broadcast_to(data.f(x, y), x.shape), phi)
    load_yd = np.einsum("tq,qi->ti", W * np.broadcast_to(data.y_d(x, y), x.shape), phi)

    # boundary integrals
    phi_e = basis.values(_edge_reference_points(erule.points).reshape(-1, 2))
    phi_e = phi_e.reshape(3, len(erule.points), -1)                   # (e, q, i)
    psi_fwd = ebasis.values(erule.points)
    psi_bwd = ebasis.values(1.0 - erule.points)
    signs = mesh.edge_signs[elements]
    psi = np.where(signs[:, :, None, None] > 0, psi_fwd, psi_bwd)      # (t, e, q, m)
    hE = mesh.h_E[mesh.element_edges[elements]]
    WE = erule.weights[None, None, :] * hE[..., None]                  # (t, e, q)

    _, bn, bn_max = edge_samples(mesh, data, elements)
    h_T = mesh.h_T[elements]
    tau1, tau2, _ = stabilization(bn, bn_max[:, None, None], eps, h_T[:, None, None])
    normals = mesh.normals[elements]

    def bnd(weight):
        return np.einsum("teq,eqi,eqj->tij", WE * weight, phi_e, phi_e)

    def cross(weight):
        return np.einsum("teq,eqi,teqm->teim", WE * weight, phi_e, psi)

    def trace(weight):
        return np.einsum("teq,teql,teqm->teml", WE * weight, psi, psi)

    cross_one = cross(1.0)
    return ElementTerms(
        mass=mass, mass_sigma=mass_sigma, mass_sigma_div=mass_sigma_div,
        div=div, conv=conv,
        bnd_tau1=bnd(tau1), bnd_tau2=bnd(tau2),
        cross_tau1=cross(tau1), cross_tau2=cross(tau2),
        cross_n=np.einsum("ted,teim->tedim", normals, cross_one),
        trace_tau1=trace(tau1), trace_tau2=trace(tau2), trace_mass=trace(1.0),
        load_f=load_f, load_yd=load_yd,
    )


# ---------------------------------------------------------------------------
# single-form local matrices: layout [q (2 nb), y (nb), traces (3 ne)]

def _form_blocks(terms: ElementTerms, eps: float, which: str) -> np.ndarray:
    n, nb = terms.mass.shape[:2]
    ne = terms.trace_mass.shape[-1]
    size = 3 * nb + 3 * ne
    K = np.zeros((n, size, size))
    if which == "B1":
        scalar = -terms.bnd_tau1 + terms.conv - terms.mass_sigma
        w_trace, trace_w, trace_trace = terms.cross_tau2, terms.cross_tau1, terms.trace_tau1
    elif which == "B2":
        scalar = -terms.bnd_tau2 - terms.conv - terms.mass_sigma_div
        w_trace, trace_w, trace_trace = terms.cross_tau1, terms.cross_tau2, terms.trace_tau2
    else:
        raise ValueError(f"unknown form {which!r}")
    s = 2 * nb
    for d in range(2):
        qd = slice(d * nb, (d + 1) * nb)
        K[:, qd, qd] = terms.mass / eps
        K[:, qd, s:s + nb] = -terms.div[:, d]
        K[:, s:s + nb, qd] = -terms.div[:, d].transpose(0, 2, 1)
    K[:, s:s + nb, s:s + nb] = scalar
    for e in range(3):
        te = slice(3 * nb + e * ne, 3 * nb + (e + 1) * ne)
        for d in range(2):
            qd = slice(d * nb, (d + 1) * nb)
            K[:, qd, te] = terms.cross_n[:, e, d]
            K[:, te, qd] = terms.cross_n[:, e, d].transpose(0, 2, 1)
        K[:, s:s + nb, te] = w_trace[:, e]
        K[:, te, s:s + nb] = trace_w[:, e].transpose(0, 2, 1)
        K[:, te, te] = -trace_trace[:, e]
    return K


@dataclass
class LocalBlocks:
    """Dense element matrix of one bilinear form.

    Local layout ``[flux (2 nb), scalar (nb), traces of interior local edges]``;
    trace slots of boundary edges are dropped.
    """

    matrix: np.ndarray
    load: np.ndarray
    slices: dict
    trace_edges: tuple   # (local edge, global edge) for each kept trace slot

    def block(self, row: str, col: str) -> np.ndarray:
        return self.matrix[self.slices[row], self.slices[col]]


def _local_form(mesh, element, data, which):
    terms = element_terms(mesh, data, np.array([element]))
    K = _form_blocks(terms, data.epsilon, which)[0]
    nb, ne = terms.mass.shape[1], terms.trace_mass.shape[-1]
    keep = list(range(3 * nb))
    slices = {"flux": slice(0, 2 * nb), "scalar": slice(2 * nb, 3 * nb)}
    trace_edges = []
    for e in range(3):
        g = int(mesh.element_edges[element, e])
        if mesh.boundary[g]:
            continue
        start = len(keep)
        keep.extend(range(3 * nb + e * ne, 3 * nb + (e + 1) * ne))
        slices[f"trace{e}"] = slice(start, start + ne)
        trace_edges.append((e, g))
    keep = np.array(keep)
    load = np.zeros(len(keep))
    if which == "B1":
        load[slices["scalar"]] = -terms.load_f[0]
    else:
        load[slices["scalar"]] = terms.load_yd[0]
    return LocalBlocks(K[np.ix_(keep, keep)], load, slices, tuple(trace_edges))


def local_B1(mesh: Mesh, element: int, data: ProblemData) -> LocalBlocks:
    """State form restricted to one element; load is ``-(f, w)``."""
    return _local_form(mesh, element, data, "B1")


def local_B2(mesh: Mesh, element: int, data: ProblemData) -> LocalBlocks:
    """Adjoint form restricted to one element; load is ``+(y_d, w)``.

    The ``-(y, w)`` coupling to the state lives in the global matrix.
    """
    return _local_form(mesh, element, data, "B2")


def local_rhs(mesh: Mesh, element: int, data: ProblemData) -> dict:
    """Right-hand-side pieces of one element.

    ``state``: ``-(f, w)``; ``adjoint``: ``(y_d, w)``; ``mass``: ``(y, w)``
    coupling block; ``control[e]`` for each boundary local edge: the operator
    ``u -> -<u, tau2 w + r.n>_e`` as a matrix over ``[q (2 nb), y (nb)]`` rows.
    """
    terms = element_terms(mesh, data, np.array([element]))
    nb = terms.mass.shape[1]
    control = {}
    for e in range(3):
        if not mesh.boundary[mesh.element_edges[element, e]]:
            continue
        block = np.vstack([terms.cross_n[0, e, 0], terms.cross_n[0, e, 1], terms.cross_tau2[0, e]])
        control[e] = -block
    return {
        "state": -terms.load_f[0],
        "adjoint": terms.load_yd[0],
        "mass": terms.mass[0],
        "control": control,
        "nb": nb,
    }


# ---------------------------------------------------------------------------
# coupled optimality system

def coupled_blocks(terms: ElementTerms, data: ProblemData):
    """Element matrices of the full optimality system, (n, 6nb+9ne, 6nb+9ne).

    Rows: state eq. (r1, w1), adjoint eq. (r2, w2), then per local edge the
    trace equations (w1hat, w2hat) and the optimality equation.
    """
    n, nb = terms.mass.shape[:2]
    ne = terms.trace_mass.shape[-1]
    nL = 6 * nb
    K = np.zeros((n, nL + 9 * ne, nL + 9 * ne))
    F = np.zeros((n, nL + 9 * ne))
    eps = data.epsilon

    def slot(e, f):
        start = nL + (3 * e + f) * ne
        return slice(start, start + ne)

    for off, scalar, w_trace, trace_w, trace_trace, hat in (
        (0, -terms.bnd_tau1 + terms.conv - terms.mass_sigma,
         terms.cross_tau2, terms.cross_tau1, terms.trace_tau1, YHAT),
        (3 * nb, -terms.bnd_tau2 - terms.conv - terms.mass_sigma_div,
         terms.cross_tau1, terms.cross_tau2, terms.trace_tau2, ZHAT),
    ):
        s = slice(off + 2 * nb, off + 3 * nb)
        for d in range(2):
            qd = slice(off + d * nb, off + (d + 1) * nb)
            K[:, qd, qd] = terms.mass / eps
            K[:, qd, s] = -terms.div[:, d]
            K[:, s, qd] = -terms.div[:, d].transpose(0, 2, 1)
            for e in range(3):
                K[:, qd, slot(e, hat)] = terms.cross_n[:, e, d]
                K[:, slot(e, hat), qd] = terms.cross_n[:, e, d].transpose(0, 2, 1)
        K[:, s, s] = scalar
        for e in range(3):
            K[:, s, slot(e, hat)] = w_trace[:, e]
            K[:, slot(e, hat), s] = trace_w[:, e].transpose(0, 2, 1)
            K[:, slot(e, hat), slot(e, hat)] = -trace_trace[:, e]

    y = slice(2 * nb, 3 * nb)
    z = slice(5 * nb, 6 * nb)
    K[:, z, y] = terms.mass
    for e in range(3):
        u = slot(e, CONTROL)
        for d in range(2):
            K[:, d * nb:(d + 1) * nb, u] = terms.cross_n[:, e, d]
            K[:, u, 3 * nb + d * nb:3 * nb + (d + 1) * nb] = terms.cross_n[:, e, d].transpose(0, 2, 1)
        K[:, y, u] = terms.cross_tau2[:, e]
        K[:, u, z] = terms.cross_tau2[:, e].transpose(0, 2, 1)
        K[:, u, u] = data.gamma * terms.trace_mass[:, e]
    F[:, y] = -terms.load_f
    F[:, z] = terms.load_yd
    return K, F


@dataclass
class GlobalSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    layout: DofLayout


def element_chunks(n: int, size: int = CHUNK):
    for start in range(0, n, size):
        yield np.arange(start, min(start + size, n))


def assemble_global(mesh: Mesh, data: ProblemData, a3: str = "error") -> GlobalSystem:
    """Monolithic sparse system of the discrete optimality system."""
    from .sparse import finalize

    data.validate(mesh, a3=a3)
    layout = DofLayout.build(mesh, data.k)
    rows, cols, vals = [], [], []
    rhs = np.zeros(layout.total)
    for chunk in element_chunks(mesh.n_elements):
        K, F = coupled_blocks(element_terms(mesh, data, chunk), data)
        dofs = np.hstack([layout.element_dofs(chunk), layout.slot_dofs(mesh, chunk)])
        valid = dofs >= 0
        mask = valid[:, :, None] & valid[:, None, :]
        R = np.broadcast_to(dofs[:, :, None], K.shape)
        C = np.broadcast_to(dofs[:, None, :], K.shape)
        rows.append(R[mask])
        cols.append(C[mask])
        vals.append(K[mask])
        np.add.at(rhs, dofs[valid], F[valid])
    A = finalize(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                 (layout.total, layout.total))
    return GlobalSystem(A, rhs, layout)


def form_layout_size(mesh: Mesh, k: int) -> int:
    nb = (k + 1) * (k + 2) // 2
    return 3 * nb * mesh.n_elements + (k + 1) * len(mesh.interior_edges)


def assemble_form_matrix(mesh: Mesh, data: ProblemData, which: str) -> sp.csr_matrix:
    """Matrix of B1 or B2 alone over ``[q, y]`` per element then interior traces."""
    from .sparse import finalize

    nb, ne = (data.k + 1) * (data.k + 2) // 2, data.k + 1
    layout = DofLayout.build(mesh, data.k)
    n_elem_dofs = 3 * nb * mesh.n_elements
    rows, cols, vals = [], [], []
    for chunk in element_chunks(mesh.n_elements):
        K = _form_blocks(element_terms(mesh, data, chunk), data.epsilon, which)
        inner = layout.interior_index[mesh.element_edges[chunk]]          # (n, 3)
        trace = np.where(inner[..., None] >= 0,
                         n_elem_dofs + ne * inner[..., None] + np.arange(ne), -1)
        dofs = np.hstack([chunk[:, None] * 3 * nb + np.arange(3 * nb),
                          trace.reshape(len(chunk), -1)])
        valid = dofs >= 0
        mask = valid[:, :, None] & valid[:, None, :]
        rows.append(np.broadcast_to(dofs[:, :, None], K.shape)[mask])
        cols.append(np.broadcast_to(dofs[:, None, :], K.shape)[mask])
        vals.append(K[mask])
    size = form_layout_size(mesh, data.k)
    return finalize(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (size, size))
