"""Quadrature rules and orthonormal polynomial bases.

Reference triangle: vertices (0, 0), (1, 0), (0, 1), area 1/2.
Reference edge: [0, 1].

Bases are orthonormal for the *area-averaged* inner product, so the
constant function is 1 and on a physical element ``(phi_i, phi_j)_T =
|T| delta_ij``; the leading coefficient of a projection is the mean value.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre
from scipy.special import roots_jacobi

from .errors import ConfigurationError

MAX_EXACTNESS = 20
MAX_DEGREE = 3


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (nq, dim) or (nq,) for edges
    weights: np.ndarray  # (nq,)
    exactness: int

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def _check_exactness(exactness):
    if not 0 <= exactness <= MAX_EXACTNESS:
        raise ConfigurationError(
            f"quadrature exactness must lie in [0, {MAX_EXACTNESS}], got {exactness}")


@lru_cache(maxsize=None)
def triangle_quadrature(exactness: int) -> QuadratureRule:
    """Collapsed (Duffy) Gauss rule on the reference triangle.

    Gauss-Legendre in x and Gauss-Jacobi(1, 0) in the collapsed direction;
    all weights are positive.
    """
    _check_exactness(exactness)
    n = max(1, (exactness + 2) // 2)
    a, wa = legendre.leggauss(n)
    b, wb = roots_jacobi(n, 1.0, 0.0)
    # (a, b) in [-1, 1]^2 -> xi = (1+a)(1-b)/4, eta = (1+b)/2
    A, B = np.meshgrid(a, b, indexing="ij")
    WA, WB = np.meshgrid(wa, wb, indexing="ij")
    xi = 0.25 * (1 + A) * (1 - B)
    eta = 0.5 * (1 + B)
    weights = (WA * WB / 8.0).ravel()
    points = np.column_stack([xi.ravel(), eta.ravel()])
    return QuadratureRule(points, weights, exactness)


@lru_cache(maxsize=None)
def edge_quadrature(exactness: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1]."""
    _check_exactness(exactness)
    n = max(1, (exactness + 2) // 2)
    x, w = legendre.leggauss(n)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w, exactness)


def _monomial_exponents(k):
    return [(i, d - i) for d in range(k + 1) for i in range(d, -1, -1)]


def _check_degree(k):
    if not 0 <= k <= MAX_DEGREE:
        raise ConfigurationError(f"polynomial degree must lie in [0, {MAX_DEGREE}], got {k}")


class SimplexBasis:
    """Orthonormal basis of P_k on the reference triangle.

    Built by Cholesky orthonormalization of the monomials ordered by total
    degree, which gives the same hierarchical span as a Dubiner basis.
    """

    def __init__(self, k: int):
        _check_degree(k)
        self.k = k
        self.exponents = np.array(_monomial_exponents(k))
        self.dim = (k + 1) * (k + 2) // 2
        rule = triangle_quadrature(2 * k)
        V = self._monomials(rule.points)
        gram = V.T @ (rule.weights[:, None] * V) / 0.5
        L = np.linalg.cholesky(gram)
        # phi = monomials @ C, with C = L^{-T}
        self.coefficients = np.linalg.inv(L).T

    def _monomials(self, pts):
        pts = np.atleast_2d(pts)
        px, py = self.exponents[:, 0], self.exponents[:, 1]
        return pts[:, :1] ** px * pts[:, 1:2] ** py

    def _monomial_gradients(self, pts):
        pts = np.atleast_2d(pts)
        x, y = pts[:, :1], pts[:, 1:2]
        px, py = self.exponents[:, 0], self.exponents[:, 1]
        dx = np.where(px > 0, px * x ** np.maximum(px - 1, 0), 0.0) * y ** py
        dy = x ** px * np.where(py > 0, py * y ** np.maximum(py - 1, 0), 0.0)
        return np.stack([dx, dy], axis=-1)

    def values(self, pts) -> np.ndarray:
        """Basis values, shape (npts, dim)."""
        return self._monomials(pts) @ self.coefficients

    def gradients(self, pts) -> np.ndarray:
        """Reference gradients, shape (npts, dim, 2)."""
        g = self._monomial_gradients(pts)
        return np.einsum("pmd,mi->pid", g, self.coefficients)


class EdgeBasis:
    """Scaled Legendre polynomials ``sqrt(2j+1) P_j(2s-1)`` on [0, 1]."""

    def __init__(self, k: int):
        _check_degree(k)
        self.k = k
        self.dim = k + 1

    def values(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        V = legendre.legvander(2.0 * s - 1.0, self.k)
        return V * np.sqrt(2.0 * np.arange(self.k + 1) + 1.0)


@lru_cache(maxsize=None)
def simplex_basis(k: int) -> SimplexBasis:
    return SimplexBasis(k)


@lru_cache(maxsize=None)
def edge_basis(k: int) -> EdgeBasis:
    return EdgeBasis(k)


def element_exactness(k: int, boost: int = 0) -> int:
    return 2 * k + 4 + boost


def edge_exactness(k: int, boost: int = 0) -> int:
    return 2 * k + 5 + boost


def physical_points(mesh, elements, ref_points) -> np.ndarray:
    """Map reference points into the given elements, shape (n, npts, 2)."""
    v0 = mesh.vertices[mesh.triangles[elements, 0]]
    J = mesh.jacobians()[elements]
    return v0[:, None, :] + np.einsum("tcd,pd->tpc", J, ref_points)


def to_reference(mesh, elements, points) -> np.ndarray:
    """Inverse affine map of physical points (n, npts, 2) in the given elements."""
    v0 = mesh.vertices[mesh.triangles[elements, 0]]
    Jinv = np.linalg.inv(mesh.jacobians()[elements])
    return np.einsum("tcd,tpd->tpc", Jinv, points - v0[:, None, :])


def project_element(f, mesh, element: int, k: int, exactness: int | None = None) -> np.ndarray:
    """Coefficients of the L2 projection of ``f`` onto P_k(T)."""
    return project_elements(f, mesh, k, np.array([element]), exactness)[0]


def project_elements(f, mesh, k: int, elements=None, exactness: int | None = None) -> np.ndarray:
    """L2 projection of ``f(x, y)`` onto P_k on every element, shape (n, dim)."""
    if elements is None:
        elements = np.arange(mesh.n_elements)
    basis = simplex_basis(k)
    rule = triangle_quadrature(element_exactness(k) if exactness is None else exactness)
    phi = basis.values(rule.points)
    X = physical_points(mesh, elements, rule.points)
    vals = np.broadcast_to(f(X[..., 0], X[..., 1]), X.shape[:2])
    # orthonormal basis: coefficient = mean of f * phi_i
    return 2.0 * np.einsum("q,tq,qi->ti", rule.weights, vals, phi)


def edge_points(mesh, edges, s) -> np.ndarray:
    """Points at parameters ``s`` along the sorted direction of each edge."""
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    return a[:, None, :] + np.asarray(s)[None, :, None] * (b - a)[:, None, :]


def project_edge(f, mesh, edge: int, k: int, exactness: int | None = None) -> np.ndarray:
    """Coefficients of the L2 projection of ``f`` onto P_k(E)."""
    return project_edges(f, mesh, k, np.array([edge]), exactness)[0]


def project_edges(f, mesh, k: int, edges=None, exactness: int | None = None) -> np.ndarray:
    """Edgewise L2 projection, parametrized from the lower to the higher vertex id."""
    if edges is None:
        edges = np.arange(mesh.n_edges)
    rule = edge_quadrature(edge_exactness(k) if exactness is None else exactness)
    psi = edge_basis(k).values(rule.points)
    X = edge_points(mesh, edges, rule.points)
    vals = np.broadcast_to(f(X[..., 0], X[..., 1]), X.shape[:2])
    return np.einsum("q,eq,qi->ei", rule.weights, vals, psi)


def project_interval(f, k: int, exactness: int | None = None) -> np.ndarray:
    """Projection of ``f(s)`` onto P_k([0, 1])."""
    rule = edge_quadrature(edge_exactness(k) if exactness is None else exactness)
    psi = edge_basis(k).values(rule.points)
    return (rule.weights * f(rule.points)) @ psi
