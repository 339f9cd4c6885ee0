"""Structured triangulations of the unit square.

Every square of an ``n x n`` grid (``n = 2**level``) is split along its
lower-left to upper-right diagonal, so the mesh at ``level + 1`` is a
refinement of the mesh at ``level``.

Local edge ``i`` of a triangle joins its vertices ``i`` and ``(i + 1) % 3``.
Global edges are the sorted vertex pairs, numbered in lexicographic order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

MAX_LEVEL = 10


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray        # (nV, 2)
    triangles: np.ndarray       # (nT, 3), counterclockwise
    edges: np.ndarray           # (nE, 2), sorted vertex ids
    element_edges: np.ndarray   # (nT, 3) global edge of each local edge
    edge_signs: np.ndarray      # (nT, 3) +1 if local direction matches the sorted one
    edge_elements: np.ndarray   # (nE, 2) incident elements, -1 padded
    boundary: np.ndarray        # (nE,) bool
    h_T: np.ndarray             # (nT,) element diameters
    h_E: np.ndarray             # (nE,) edge lengths
    areas: np.ndarray           # (nT,)
    normals: np.ndarray         # (nT, 3, 2) outward unit normals per local edge
    level: int | None = None

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    @property
    def h(self) -> float:
        return float(self.h_T.max())

    def jacobians(self) -> np.ndarray:
        """Affine map matrices ``J`` with ``x = v0 + J @ xi``, shape (nT, 2, 2)."""
        v = self.vertices[self.triangles]
        return np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Element containing each point; only valid for structured meshes.

        Points on shared edges are assigned to one of the incident elements.
        """
        if self.level is None:
            raise ValueError("point location needs a structured mesh")
        n = 2 ** self.level
        pts = np.asarray(points, dtype=float)
        x = np.clip(pts[..., 0] * n, 0.0, n * (1 - 1e-15))
        y = np.clip(pts[..., 1] * n, 0.0, n * (1 - 1e-15))
        i = np.floor(x).astype(np.int64)
        j = np.floor(y).astype(np.int64)
        upper = (y - j) > (x - i)
        return 2 * (j * n + i) + upper


def _from_arrays(vertices: np.ndarray, triangles: np.ndarray, level=None) -> Mesh:
    local = np.stack([triangles, np.roll(triangles, -1, axis=1)], axis=-1)  # (nT,3,2)
    sorted_pairs = np.sort(local, axis=-1)
    edges, inverse = np.unique(sorted_pairs.reshape(-1, 2), axis=0, return_inverse=True)
    element_edges = inverse.reshape(-1, 3)
    edge_signs = np.where(local[..., 0] < local[..., 1], 1, -1)

    n_edges = len(edges)
    counts = np.bincount(element_edges.ravel(), minlength=n_edges)
    edge_elements = -np.ones((n_edges, 2), dtype=np.int64)
    order = np.argsort(element_edges.ravel(), kind="stable")
    owners = order // 3
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    edge_elements[:, 0] = owners[starts]
    two = counts == 2
    edge_elements[two, 1] = owners[starts[two] + 1]

    p = vertices[local]                                    # (nT,3,2,2)
    tangent = p[:, :, 1] - p[:, :, 0]
    lengths = np.linalg.norm(tangent, axis=-1)
    # counterclockwise triangles: outward normal is the tangent rotated clockwise
    normals = np.stack([tangent[..., 1], -tangent[..., 0]], axis=-1) / lengths[..., None]

    v = vertices[triangles]
    d1, d2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    h_E = np.linalg.norm(vertices[edges[:, 1]] - vertices[edges[:, 0]], axis=1)
    return Mesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        element_edges=element_edges,
        edge_signs=edge_signs,
        edge_elements=edge_elements,
        boundary=counts == 1,
        h_T=lengths.max(axis=1),
        h_E=h_E,
        areas=areas,
        normals=normals,
        level=level,
    )


def build_uniform_mesh(level: int) -> Mesh:
    """Uniform mesh with ``2 * 4**level`` triangles and ``h/sqrt(2) = 2**-level``."""
    if isinstance(level, bool) or not isinstance(level, (int, np.integer)):
        raise ConfigurationError(f"level must be an integer, got {level!r}")
    if not 1 <= level <= MAX_LEVEL:
        raise ConfigurationError(f"level must lie in [1, {MAX_LEVEL}], got {level}")
    n = 2 ** int(level)
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ll = (j * (n + 1) + i).ravel()
    lr, ul, ur = ll + 1, ll + n + 1, ll + n + 2
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return _from_arrays(vertices, triangles.astype(np.int64), level=int(level))


def edge_geometry(mesh: Mesh, element: int, local_edge: int):
    """Outward unit normal, length and endpoints of a local edge."""
    if not 0 <= element < mesh.n_elements:
        raise IndexError(f"element {element} out of range")
    if not 0 <= local_edge < 3:
        raise IndexError(f"local edge {local_edge} out of range")
    tri = mesh.triangles[element]
    a = mesh.vertices[tri[local_edge]]
    b = mesh.vertices[tri[(local_edge + 1) % 3]]
    return mesh.normals[element, local_edge].copy(), float(np.hypot(*(b - a))), (a, b)


def mesh_statistics(mesh: Mesh) -> dict:
    if mesh.n_elements == 0:
        raise ValueError("empty mesh")
    n_boundary = int(mesh.boundary.sum())
    return {
        "h_max": float(mesh.h_T.max()),
        "h_min": float(mesh.h_T.min()),
        "n_elements": mesh.n_elements,
        "n_edges": mesh.n_edges,
        "n_interior_edges": mesh.n_edges - n_boundary,
        "n_boundary_edges": n_boundary,
    }
