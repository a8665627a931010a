"""Dense-vector and sparse-row numeric kernel.

Parameter vectors are plain 1-D ``float64`` numpy arrays. Data rows are
immutable :class:`SparseRow` objects collected in a :class:`DesignMatrix`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse


class DimensionError(ValueError):
    """Raised when operands have incompatible dimensions."""


def as_vector(x) -> np.ndarray:
    """Return ``x`` as a 1-D float64 array (no copy when already one)."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def _check_same(u: np.ndarray, v: np.ndarray) -> None:
    if u.shape != v.shape:
        raise DimensionError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")


def dot(u, v) -> float:
    u, v = as_vector(u), as_vector(v)
    _check_same(u, v)
    return float(u @ v)


def norm_sq(u) -> float:
    u = as_vector(u)
    return float(u @ u)


def axpy(alpha: float, u, v) -> np.ndarray:
    """Return ``alpha * u + v`` as a new array."""
    u, v = as_vector(u), as_vector(v)
    _check_same(u, v)
    return alpha * u + v


@dataclass(frozen=True, eq=False)
class SparseRow:
    """Row of a data matrix with strictly increasing 0-based column indices.

    Explicit zeros are dropped on construction; duplicate or unsorted
    indices raise ``ValueError`` instead of being merged.
    """

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        val = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if idx.shape != val.shape:
            raise ValueError("indices and values must have equal length")
        if self.dim < 0:
            raise ValueError("dim must be nonnegative")
        if idx.size:
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing (no duplicates)")
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValueError(f"index out of range for dim={self.dim}")
        keep = val != 0.0
        if not keep.all():
            idx, val = idx[keep], val[keep]
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_dense(cls, x) -> "SparseRow":
        x = as_vector(x)
        nz = np.flatnonzero(x)
        return cls(nz, x[nz], x.shape[0])

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def densify(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def norm_sq(self) -> float:
        return float(self.values @ self.values)

    def __eq__(self, other):
        if not isinstance(other, SparseRow):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        pairs = ", ".join(f"{i}:{v!r}" for i, v in zip(self.indices.tolist(), self.values.tolist()))
        return f"SparseRow({{{pairs}}}, dim={self.dim})"


def sparse_dot(r: SparseRow, v) -> float:
    v = as_vector(v)
    if r.dim != v.shape[0]:
        raise DimensionError(f"dimension mismatch: row dim {r.dim} vs vector {v.shape[0]}")
    if not r.indices.size:
        return 0.0
    return float(r.values @ v[r.indices])


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """n x d data matrix stored by rows, with one label per row."""

    rows: tuple
    labels: np.ndarray
    d: int
    _csr: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        rows = tuple(self.rows)
        labels = np.array(self.labels, dtype=np.float64).reshape(-1)
        if len(rows) != labels.shape[0]:
            raise DimensionError(f"{len(rows)} rows but {labels.shape[0]} labels")
        for i, r in enumerate(rows):
            if not isinstance(r, SparseRow):
                raise TypeError(f"row {i} is not a SparseRow")
            if r.dim != self.d:
                raise DimensionError(f"row {i} has dim {r.dim}, expected {self.d}")
        labels.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return len(self.rows)

    @classmethod
    def from_dense(cls, a, labels) -> "DesignMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise DimensionError("expected a 2-D array")
        return cls(tuple(SparseRow.from_dense(row) for row in a), labels, a.shape[1])

    @classmethod
    def from_rows(cls, rows: Iterable[SparseRow], labels: Sequence[float], d: int) -> "DesignMatrix":
        return cls(tuple(rows), labels, d)

    def csr(self) -> sparse.csr_matrix:
        """Cached scipy CSR view, used for full-data matrix-vector products."""
        if self._csr is None:
            indptr = np.zeros(self.n + 1, dtype=np.int64)
            np.cumsum([r.nnz for r in self.rows], out=indptr[1:])
            if self.n:
                indices = np.concatenate([r.indices for r in self.rows])
                data = np.concatenate([r.values for r in self.rows])
            else:
                indices = np.zeros(0, dtype=np.int64)
                data = np.zeros(0)
            mat = sparse.csr_matrix((data, indices, indptr), shape=(self.n, self.d))
            object.__setattr__(self, "_csr", mat)
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self.csr().toarray()

    def row_norms_sq(self) -> np.ndarray:
        return np.array([r.norm_sq() for r in self.rows])

    def matvec(self, x) -> np.ndarray:
        """Return ``A @ x``."""
        x = as_vector(x)
        if x.shape[0] != self.d:
            raise DimensionError(f"dimension mismatch: {self.d} vs {x.shape[0]}")
        return self.csr() @ x

    def rmatvec(self, r) -> np.ndarray:
        """Return ``A.T @ r``."""
        r = as_vector(r)
        if r.shape[0] != self.n:
            raise DimensionError(f"dimension mismatch: {self.n} vs {r.shape[0]}")
        return self.csr().T @ r
