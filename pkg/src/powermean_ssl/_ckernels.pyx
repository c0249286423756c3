# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled CSR kernels.

Every routine here has a drop-in twin in ``_pykernels`` with the same
signature; ``kernels`` picks one at import time.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs
from libcpp.vector cimport vector
from libcpp.algorithm cimport sort

cnp.import_array()

BACKEND = "cython"


def csr_matvec(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
               const double[::1] data, const double[::1] x):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef double[::1] y = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i, q
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for q in range(indptr[i], indptr[i + 1]):
                acc = acc + data[q] * x[indices[q]]
            y[i] = acc
    return np.asarray(y)


def csr_matmat(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
               const double[::1] data, const double[:, ::1] X):
    """Y = A @ X for a C-contiguous block X of shape (n_cols, m)."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t m = X.shape[1]
    cdef double[:, ::1] Y = np.zeros((n, m), dtype=np.float64)
    cdef Py_ssize_t i, q, c, j
    cdef double a
    with nogil:
        for i in range(n):
            for q in range(indptr[i], indptr[i + 1]):
                a = data[q]
                j = indices[q]
                for c in range(m):
                    Y[i, c] = Y[i, c] + a * X[j, c]
    return np.asarray(Y)


def ict_factor(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
               const double[::1] data, double drop_tol):
    """Left-looking threshold incomplete Cholesky, A ~= U^T U.

    Returns ``(u_indptr, u_indices, u_data, bad_row, bad_pivot)``; U is
    upper triangular in CSR with the diagonal first in each row.  When a
    pivot is nonpositive the factorization stops and ``bad_row >= 0``.
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef vector[cnp.int64_t] u_ptr
    cdef vector[cnp.int64_t] u_col
    cdef vector[double] u_val
    cdef double[::1] w = np.zeros(n, dtype=np.float64)
    cdef char[::1] mark = np.zeros(n, dtype=np.int8)
    cdef cnp.int64_t[::1] head = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] nxt = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] pos = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] row_end = np.zeros(n, dtype=np.int64)
    cdef vector[cnp.int64_t] pattern
    cdef Py_ssize_t k, q, j, t, i, nexti, p0, c
    cdef double uik, d, ukk, thresh, rn, v
    cdef Py_ssize_t bad_row = -1
    cdef double bad_pivot = 0.0

    u_ptr.push_back(0)
    with nogil:
        for k in range(n):
            pattern.clear()
            rn = 0.0
            for q in range(indptr[k], indptr[k + 1]):
                rn = rn + data[q] * data[q]
                j = indices[q]
                if j >= k:
                    if mark[j] == 0:
                        mark[j] = 1
                        w[j] = 0.0
                        pattern.push_back(j)
                    w[j] = w[j] + data[q]
            if mark[k] == 0:
                mark[k] = 1
                w[k] = 0.0
                pattern.push_back(k)
            thresh = drop_tol * sqrt(rn)

            # rows i < k whose next stored column is k
            i = head[k]
            while i != -1:
                nexti = nxt[i]
                p0 = pos[i]
                uik = u_val[p0]
                for q in range(p0, row_end[i]):
                    j = u_col[q]
                    if mark[j] == 0:
                        mark[j] = 1
                        w[j] = 0.0
                        pattern.push_back(j)
                    w[j] = w[j] - uik * u_val[q]
                pos[i] = p0 + 1
                if p0 + 1 < row_end[i]:
                    c = u_col[p0 + 1]
                    nxt[i] = head[c]
                    head[c] = i
                i = nexti

            d = w[k]
            if not (d > 0.0):
                bad_row = k
                bad_pivot = d
                break
            ukk = sqrt(d)
            sort(pattern.begin(), pattern.end())
            u_col.push_back(k)
            u_val.push_back(ukk)
            for t in range(<Py_ssize_t>pattern.size()):
                j = pattern[t]
                mark[j] = 0
                if j == k:
                    continue
                v = w[j]
                if fabs(v) < thresh or v == 0.0:
                    continue
                u_col.push_back(j)
                u_val.push_back(v / ukk)
            row_end[k] = u_col.size()
            pos[k] = u_ptr[k] + 1
            if pos[k] < row_end[k]:
                c = u_col[pos[k]]
                nxt[k] = head[c]
                head[c] = k
            u_ptr.push_back(u_col.size())

    if bad_row >= 0:
        return None, None, None, bad_row, bad_pivot
    nnz = u_col.size()
    out_ptr = np.empty(n + 1, dtype=np.int64)
    out_col = np.empty(nnz, dtype=np.int64)
    out_val = np.empty(nnz, dtype=np.float64)
    cdef cnp.int64_t[::1] op = out_ptr
    cdef cnp.int64_t[::1] oc = out_col
    cdef double[::1] ov = out_val
    for q in range(n + 1):
        op[q] = u_ptr[q]
    for q in range(<Py_ssize_t>nnz):
        oc[q] = u_col[q]
        ov[q] = u_val[q]
    return out_ptr, out_col, out_val, -1, 0.0


def ic_solve(const cnp.int64_t[::1] u_indptr, const cnp.int64_t[::1] u_indices,
             const double[::1] u_data, const double[::1] b):
    """Solve U^T U x = b with U upper triangular, diagonal first per row."""
    cdef Py_ssize_t n = u_indptr.shape[0] - 1
    cdef double[::1] x = np.array(b, dtype=np.float64, copy=True)
    cdef Py_ssize_t k, q
    cdef double yk, s
    with nogil:
        for k in range(n):
            yk = x[k] / u_data[u_indptr[k]]
            x[k] = yk
            for q in range(u_indptr[k] + 1, u_indptr[k + 1]):
                x[u_indices[q]] = x[u_indices[q]] - u_data[q] * yk
        for k in range(n - 1, -1, -1):
            s = x[k]
            for q in range(u_indptr[k] + 1, u_indptr[k + 1]):
                s = s - u_data[q] * x[u_indices[q]]
            x[k] = s / u_data[u_indptr[k]]
    return np.asarray(x)
