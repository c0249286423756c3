"""Pure NumPy/SciPy twins of the compiled kernels in ``_ckernels``.

``csr_matvec`` and ``csr_matmat`` reproduce the compiled accumulation order
exactly (``np.bincount`` sums its weights sequentially), so both backends
give bit-identical products.  ``ict_factor`` runs the same left-looking
algorithm in Python loops; it is only meant for small problems.
"""

import math

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import spsolve_triangular

BACKEND = "python"


def _row_ids(indptr):
    return np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))


def csr_matvec(indptr, indices, data, x):
    n = len(indptr) - 1
    return np.bincount(_row_ids(indptr), weights=data * x[indices], minlength=n).astype(np.float64)


def csr_matmat(indptr, indices, data, X):
    n = len(indptr) - 1
    rows = _row_ids(indptr)
    Y = np.empty((n, X.shape[1]), dtype=np.float64)
    for c in range(X.shape[1]):
        Y[:, c] = np.bincount(rows, weights=data * X[indices, c], minlength=n)
    return Y


def ict_factor(indptr, indices, data, drop_tol):
    n = len(indptr) - 1
    u_ptr = [0]
    u_col = []
    u_val = []
    head = [-1] * n
    nxt = [-1] * n
    pos = [0] * n
    row_end = [0] * n
    for k in range(n):
        lo, hi = indptr[k], indptr[k + 1]
        cols = indices[lo:hi]
        vals = data[lo:hi]
        thresh = drop_tol * math.sqrt(float(np.dot(vals, vals)))
        w = {}
        for j, a in zip(cols.tolist(), vals.tolist()):
            if j >= k:
                w[j] = w.get(j, 0.0) + a
        w.setdefault(k, 0.0)
        i = head[k]
        while i != -1:
            nexti = nxt[i]
            p0 = pos[i]
            uik = u_val[p0]
            for q in range(p0, row_end[i]):
                j = u_col[q]
                w[j] = w.get(j, 0.0) - uik * u_val[q]
            pos[i] = p0 + 1
            if p0 + 1 < row_end[i]:
                c = u_col[p0 + 1]
                nxt[i] = head[c]
                head[c] = i
            i = nexti
        d = w[k]
        if not d > 0.0:
            return None, None, None, k, d
        ukk = math.sqrt(d)
        u_col.append(k)
        u_val.append(ukk)
        for j in sorted(w):
            if j == k:
                continue
            v = w[j]
            if abs(v) < thresh or v == 0.0:
                continue
            u_col.append(j)
            u_val.append(v / ukk)
        row_end[k] = len(u_col)
        pos[k] = u_ptr[k] + 1
        if pos[k] < row_end[k]:
            c = u_col[pos[k]]
            nxt[k] = head[c]
            head[c] = k
        u_ptr.append(len(u_col))
    return (np.asarray(u_ptr, dtype=np.int64), np.asarray(u_col, dtype=np.int64),
            np.asarray(u_val, dtype=np.float64), -1, 0.0)


_U_CACHE = {}


def ic_solve(u_indptr, u_indices, u_data, b):
    entry = _U_CACHE.get(id(u_data))
    if entry is None or entry[0] is not u_data:
        if len(_U_CACHE) > 32:
            _U_CACHE.clear()
        n = len(u_indptr) - 1
        mat = sps.csr_matrix((u_data, u_indices, u_indptr), shape=(n, n))
        entry = (u_data, mat, mat.T.tocsr())
        _U_CACHE[id(u_data)] = entry
    _, U, Ut = entry
    y = spsolve_triangular(Ut, np.asarray(b, dtype=np.float64), lower=True)
    return spsolve_triangular(U, y, lower=False)
