"""Sparse storage and direct solves, backed by scipy.sparse and SuperLU."""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import SingularMatrixError

PIVOT_THRESHOLD = 1e-300
_DENSE_DIAGNOSIS_LIMIT = 4000


def finalize(rows, cols, vals, shape) -> sp.csr_matrix:
    """CSR matrix from triplets; duplicates are summed, column indices sorted."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    n_rows, n_cols = shape
    if rows.size and (rows.min() < 0 or rows.max() >= n_rows):
        raise IndexError(f"row index out of range for shape {shape}")
    if cols.size and (cols.min() < 0 or cols.max() >= n_cols):
        raise IndexError(f"column index out of range for shape {shape}")
    A = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _singular_row(A) -> int | None:
    if A.shape[0] > _DENSE_DIAGNOSIS_LIMIT:
        return None
    _, _, U = scipy.linalg.lu(A.toarray())
    diag = np.abs(np.diag(U))
    return int(np.argmin(diag))


def nested_dissection(points: np.ndarray, leaf: int = 64) -> np.ndarray:
    """Fill-reducing ordering from geometric nested dissection.

    ``points`` are integer or half-integer grid coordinates of the unknowns
    (edge midpoints scaled by ``2**level``). Unknowns lying on the cutting grid
    line form the separator, which is valid whenever two unknowns only couple
    through a shared grid cell, as is the case for the trace unknowns.
    """
    points = np.asarray(points, dtype=float)
    parts = []

    def split(idx, x0, x1, y0, y1):
        if len(idx) <= leaf or (x1 - x0 < 2 and y1 - y0 < 2):
            parts.append(idx)
            return
        axis, lo, hi = (0, x0, x1) if x1 - x0 >= y1 - y0 else (1, y0, y1)
        cut = (lo + hi) // 2
        v = points[idx, axis]
        if axis == 0:
            split(idx[v < cut], x0, cut, y0, y1)
            split(idx[v > cut], cut, x1, y0, y1)
        else:
            split(idx[v < cut], x0, x1, y0, cut)
            split(idx[v > cut], x0, x1, cut, y1)
        parts.append(idx[v == cut])

    n = int(np.ceil(points.max())) if len(points) else 0
    split(np.arange(len(points)), 0, n, 0, n)
    return np.concatenate(parts)


class Factorization:
    """LU factors of a square sparse matrix.

    Without ``ordering`` the columns are ordered by minimum degree on
    ``A + A^T`` and rows by partial pivoting. With a symmetric ``ordering``
    (for instance from :func:`nested_dissection`) the matrix is permuted
    first and the pivot threshold relaxed to keep the ordering's fill.
    """

    def __init__(self, A, ordering: np.ndarray | None = None, pivot_threshold: float = 0.01):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.shape = A.shape
        scale = float(abs(A).max()) if A.nnz else 0.0
        if scale == 0.0:
            raise SingularMatrixError("zero matrix", row=0)
        self._perm = None
        try:
            if ordering is None:
                self._lu = splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=1.0)
            else:
                self._perm = np.asarray(ordering)
                self._lu = splu(A[self._perm][:, self._perm].tocsc(), permc_spec="NATURAL",
                                diag_pivot_thresh=pivot_threshold)
        except RuntimeError as exc:
            row = _singular_row(A)
            raise SingularMatrixError(f"matrix is singular ({exc}); pivot row {row}", row=row) from exc
        pivots = np.abs(self._lu.U.diagonal())
        bad = np.flatnonzero(pivots <= PIVOT_THRESHOLD * scale)
        if bad.size:
            row = int(np.flatnonzero(self._lu.perm_r == bad[0])[0])
            if self._perm is not None:
                row = int(self._perm[row])
            raise SingularMatrixError(f"pivot below threshold at row {row}", row=row)

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.shape[0]:
            raise ValueError("right-hand side has wrong length")
        if self._perm is None:
            return self._lu.solve(b)
        x = np.empty_like(b)
        x[self._perm] = self._lu.solve(b[self._perm])
        return x

    @property
    def fill(self) -> int:
        return int(self._lu.L.nnz + self._lu.U.nnz)


def factor_solve(A, b) -> np.ndarray:
    return Factorization(A).solve(b)


def residual_norm(A, x, b) -> float:
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.shape[1] != x.shape[0] or A.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: A {A.shape}, x {x.shape}, b {b.shape}")
    return float(np.linalg.norm(A @ x - b))


def dump_matrix_market(A, path) -> None:
    """Write ``A`` as ``%%MatrixMarket matrix coordinate real general``."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), field="real", symmetry="general")
