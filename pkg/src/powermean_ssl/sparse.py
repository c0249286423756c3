"""CSR matrices, split-complex vectors and Matrix Market I/O.

Matrices are canonical on construction: column indices strictly increasing
within each row, duplicates summed, explicit zeros dropped.  The index and
value arrays are frozen (``writeable=False``) so a matrix can be shared
between workers without copying.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sps

from . import kernels
from .errors import InputError


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    if a.flags.writeable:
        a = a.copy()
        a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Real matrix in canonical compressed-sparse-row form."""

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_ptr", _frozen(self.row_ptr, np.int64))
        object.__setattr__(self, "col_idx", _frozen(self.col_idx, np.int64))
        object.__setattr__(self, "values", _frozen(self.values, np.float64))
        rp = self.row_ptr
        if len(rp) != self.n_rows + 1 or rp[0] != 0 or rp[-1] != len(self.col_idx):
            raise InputError("row_ptr must have length n_rows+1, start at 0 and end at nnz")
        if len(self.values) != len(self.col_idx):
            raise InputError("col_idx and values differ in length")
        if np.any(np.diff(rp) < 0):
            raise InputError("row_ptr must be nondecreasing")
        if len(self.col_idx):
            if self.col_idx.min() < 0 or self.col_idx.max() >= self.n_cols:
                raise InputError("column index out of range")
            # strictly increasing within rows: a decrease is only allowed at row starts
            rows = self.row_ids()
            same_row = rows[1:] == rows[:-1]
            if np.any(same_row & (np.diff(self.col_idx) <= 0)):
                raise InputError("column indices must be strictly increasing within each row")
        if not np.all(np.isfinite(self.values)):
            raise InputError("matrix values must be finite")

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return len(self.values)

    def row_ids(self):
        return np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.row_ptr))

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.row_ids(), self.col_idx] = self.values
        return out

    def to_scipy(self):
        return sps.csr_matrix((self.values, self.col_idx, self.row_ptr), shape=self.shape)

    def transpose(self):
        return csr_from_arrays(self.col_idx, self.row_ids(), self.values, self.n_cols, self.n_rows)

    def is_symmetric(self):
        """Exact (bit-level) symmetry test."""
        if self.n_rows != self.n_cols:
            return False
        t = self.transpose()
        return (np.array_equal(self.row_ptr, t.row_ptr)
                and np.array_equal(self.col_idx, t.col_idx)
                and np.array_equal(self.values, t.values))

    def diagonal(self):
        d = np.zeros(min(self.shape))
        rows = self.row_ids()
        on = rows == self.col_idx
        d[rows[on]] = self.values[on]
        return d

    def row_sums(self):
        return np.bincount(self.row_ids(), weights=self.values, minlength=self.n_rows)

    def add_diagonal(self, shift):
        """Return ``A + shift * I`` (square matrices only)."""
        if self.n_rows != self.n_cols:
            raise InputError("add_diagonal needs a square matrix")
        idx = np.arange(self.n_rows, dtype=np.int64)
        return csr_from_arrays(np.concatenate([self.row_ids(), idx]),
                               np.concatenate([self.col_idx, idx]),
                               np.concatenate([self.values, np.full(self.n_rows, float(shift))]),
                               self.n_rows, self.n_cols)

    def __matmul__(self, x):
        x = np.asarray(x)
        if x.ndim == 1:
            return spmv(self, x)
        return spmm(self, x)


@dataclass(frozen=True, eq=False)
class ComplexVector:
    """Complex vector held as separate real and imaginary arrays."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "re", _frozen(self.re, np.float64))
        object.__setattr__(self, "im", _frozen(self.im, np.float64))
        if self.re.shape != self.im.shape or self.re.ndim != 1:
            raise InputError("re and im must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(self.re)) and np.all(np.isfinite(self.im))):
            raise InputError("complex vector entries must be finite")

    @classmethod
    def from_complex(cls, z):
        z = np.asarray(z, dtype=np.complex128)
        return cls(z.real, z.imag)

    def to_complex(self):
        return self.re + 1j * self.im

    def __len__(self):
        return len(self.re)


def csr_from_arrays(rows, cols, vals, n_rows, n_cols):
    """Canonical CSR from parallel coordinate arrays (duplicates summed)."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=np.float64).ravel()
    if not (len(rows) == len(cols) == len(vals)):
        raise InputError("triplet arrays differ in length")
    if n_rows < 0 or n_cols < 0:
        raise InputError("matrix dimensions must be nonnegative")
    if len(rows):
        if rows.min() < 0 or rows.max() >= n_rows:
            raise InputError(f"row index out of range [0, {n_rows})")
        if cols.min() < 0 or cols.max() >= n_cols:
            raise InputError(f"column index out of range [0, {n_cols})")
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if len(rows):
        first = np.ones(len(rows), dtype=bool)
        first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(first)
        vals = np.add.reduceat(vals, starts)
        rows, cols = rows[starts], cols[starts]
        keep = vals != 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=row_ptr[1:])
    return SparseMatrix(int(n_rows), int(n_cols), row_ptr, cols, vals)


def csr_from_triplets(triplets, n_rows, n_cols):
    """Build a canonical CSR matrix from ``(row, col, value)`` triplets.

    Duplicate coordinates are summed and entries that end up exactly zero are
    dropped.

    >>> A = csr_from_triplets([(0, 1, 2.0), (0, 1, 3.0)], 2, 2)
    >>> A.to_dense()[0, 1]
    5.0
    """
    triplets = list(triplets)
    if triplets:
        r, c, v = zip(*triplets)
    else:
        r, c, v = (), (), ()
    for idx in (r, c):
        if any(int(i) != i for i in idx):
            raise InputError("indices must be integers")
    return csr_from_arrays(np.asarray(r, dtype=np.int64), np.asarray(c, dtype=np.int64),
                           np.asarray(v, dtype=np.float64), n_rows, n_cols)


def csr_from_dense(M, tol=0.0):
    M = np.asarray(M, dtype=np.float64)
    r, c = np.nonzero(np.abs(M) > tol)
    return csr_from_arrays(r, c, M[r, c], M.shape[0], M.shape[1])


def csr_from_scipy(M):
    M = sps.coo_matrix(M)
    return csr_from_arrays(M.row, M.col, M.data, M.shape[0], M.shape[1])


def identity(n):
    idx = np.arange(n, dtype=np.int64)
    return SparseMatrix(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))


def spmv(A, x):
    """Real sparse matrix-vector product ``A @ x``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1 or len(x) != A.n_cols:
        raise InputError(f"dimension mismatch: matrix has {A.n_cols} columns, vector {x.shape}")
    return kernels.csr_matvec(A.row_ptr, A.col_idx, A.values, x)


def spmm(A, X):
    """Sparse times dense block ``A @ X`` with ``X`` of shape ``(n_cols, m)``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != A.n_cols:
        raise InputError(f"dimension mismatch: matrix has {A.n_cols} columns, block {X.shape}")
    return kernels.csr_matmat(A.row_ptr, A.col_idx, A.values, X)


def spmv_complex(A, x):
    """Apply the real matrix ``A`` to the real and imaginary parts of ``x``."""
    if not isinstance(x, ComplexVector):
        x = ComplexVector.from_complex(x)
    if len(x) != A.n_cols:
        raise InputError(f"dimension mismatch: matrix has {A.n_cols} columns, vector {len(x)}")
    Y = spmm(A, np.column_stack([x.re, x.im]))
    return ComplexVector(Y[:, 0], Y[:, 1])


# -- Matrix Market ---------------------------------------------------------

def read_mtx(path):
    """Read a real coordinate Matrix Market file (general or symmetric)."""
    path = Path(path)
    try:
        fh = path.open()
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    with fh:
        header = fh.readline().split()
        if (len(header) < 5 or header[0].lower() != "%%matrixmarket"
                or header[1].lower() != "matrix" or header[2].lower() != "coordinate"):
            raise InputError(f"{path}: not a coordinate Matrix Market file")
        field, symmetry = header[3].lower(), header[4].lower()
        if field not in ("real", "integer", "pattern"):
            raise InputError(f"{path}: unsupported field {field!r}")
        if symmetry not in ("general", "symmetric"):
            raise InputError(f"{path}: unsupported symmetry {symmetry!r}")
        line = fh.readline()
        while line.startswith("%") or not line.strip():
            line = fh.readline()
            if not line:
                raise InputError(f"{path}: missing size line")
        try:
            n_rows, n_cols, nnz = (int(t) for t in line.split())
        except ValueError as exc:
            raise InputError(f"{path}: bad size line {line.strip()!r}") from exc
        ncol = 2 if field == "pattern" else 3
        body = np.loadtxt(fh, ndmin=2, comments="%") if nnz else np.zeros((0, ncol))
    if body.shape != (nnz, ncol):
        raise InputError(f"{path}: expected {nnz} entries with {ncol} columns, got {body.shape}")
    r = body[:, 0].astype(np.int64) - 1
    c = body[:, 1].astype(np.int64) - 1
    v = body[:, 2] if field != "pattern" else np.ones(nnz)
    if symmetry == "symmetric":
        off = r != c
        r, c, v = (np.concatenate([r, c[off]]), np.concatenate([c, r[off]]),
                   np.concatenate([v, v[off]]))
    return csr_from_arrays(r, c, v, n_rows, n_cols)


def write_mtx(path, A, symmetric=None):
    """Write ``A`` as coordinate Matrix Market; lower triangle only if symmetric."""
    if symmetric is None:
        symmetric = A.is_symmetric()
    rows, cols, vals = A.row_ids(), A.col_idx, A.values
    if symmetric:
        keep = rows >= cols
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    kind = "symmetric" if symmetric else "general"
    with Path(path).open("w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate real {kind}\n")
        fh.write(f"{A.n_rows} {A.n_cols} {len(vals)}\n")
        for i, j, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
            fh.write(f"{i + 1} {j + 1} {v!r}\n")
