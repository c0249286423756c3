"""Krylov solvers and spectral estimators.

Preconditioned conjugate gradients for SPD operators, restarted GMRES for
real or complex operators, threshold incomplete Cholesky and a Lanczos
estimate of extreme eigenvalues.  Operators are plain callables wrapped in
:class:`LinearOperator`; nothing here needs an explicit matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import kernels
from .errors import DomainError, FactorizationError, InputError, NumericalError
from .sparse import SparseMatrix, spmv

DEFAULT_TOL = 1e-8
GMRES_RESTART = 50
GMRES_MAX_ITER = 1000
PCG_MAX_ITER = 500
LAMBDA_MAX_SAFETY = 1.01


@dataclass(frozen=True)
class LinearOperator:
    """A linear map of fixed dimension given by its action on vectors."""

    dimension: int
    apply: Callable[[np.ndarray], np.ndarray]
    dtype: type = np.float64

    def __call__(self, x):
        return self.apply(x)


def as_operator(A, dtype=None):
    """Wrap a :class:`SparseMatrix`, dense array or operator as a LinearOperator."""
    if isinstance(A, LinearOperator):
        return A
    if isinstance(A, SparseMatrix):
        def apply(x):
            if np.iscomplexobj(x):
                return spmv(A, x.real) + 1j * spmv(A, x.imag)
            return spmv(A, x)
        return LinearOperator(A.n_rows, apply, np.float64)
    M = np.asarray(A)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError("operator must be square")
    return LinearOperator(M.shape[0], lambda x: M @ x, dtype or M.dtype.type)


@dataclass
class SolveReport:
    iterations: int
    final_residual_norm: float
    converged: bool
    matvec_count: int
    residual_history: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class IncompleteCholeskyFactor:
    """``A ~= L L^T`` with ``L = U^T`` lower triangular; stored as ``U`` in CSR."""

    upper: SparseMatrix
    drop_tolerance: float

    @property
    def lower(self):
        return self.upper.transpose()

    def solve(self, r):
        U = self.upper
        return kernels.ic_solve(U.row_ptr, U.col_idx, U.values,
                                np.ascontiguousarray(r, dtype=np.float64))


def incomplete_cholesky(A, drop_tol=1e-4):
    """Threshold incomplete Cholesky factor of a symmetric positive definite matrix.

    Only the upper triangle of ``A`` is read.  During the factorization an
    off-diagonal entry is discarded when its magnitude falls below
    ``drop_tol`` times the 2-norm of the corresponding row of ``A``; with
    ``drop_tol=0`` the exact Cholesky factor is returned.

    Raises
    ------
    FactorizationError
        On a nonpositive pivot.  Callers may retry with a diagonal boost.
    """
    if A.n_rows != A.n_cols:
        raise InputError("incomplete_cholesky needs a square matrix")
    if drop_tol < 0:
        raise DomainError("drop_tol must be nonnegative")
    ptr, col, val, bad, pivot = kernels.ict_factor(A.row_ptr, A.col_idx, A.values, float(drop_tol))
    if bad >= 0:
        raise FactorizationError(bad, pivot)
    U = SparseMatrix(A.n_rows, A.n_cols, ptr, col, val)
    return IncompleteCholeskyFactor(U, float(drop_tol))


def pcg_solve(op, b, precond=None, tol=DEFAULT_TOL, max_iter=PCG_MAX_ITER, x0=None,
              callback=None):
    """Preconditioned conjugate gradients for a real SPD operator.

    Stops when the recursively updated residual satisfies
    ``||r|| <= tol * ||b||``.  Non-convergence is reported, not raised;
    a nonpositive curvature ``p.Ap <= 0`` raises :class:`NumericalError`.
    """
    op = as_operator(op)
    if tol <= 0:
        raise DomainError("tol must be positive")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (op.dimension,):
        raise InputError(f"right-hand side has shape {b.shape}, operator dimension {op.dimension}")
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, True, 0, [0.0])
    matvecs = 0
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=np.float64)
        r = b - op(x)
        matvecs += 1
    rnorm = float(np.linalg.norm(r))
    history = [rnorm]
    target = tol * bnorm
    if rnorm <= target:
        return x, SolveReport(0, rnorm, True, matvecs, history)
    z = precond.solve(r) if precond is not None else r
    p = z.copy()
    rz = float(r @ z)
    it = 0
    while it < max_iter:
        Ap = op(p)
        matvecs += 1
        curv = float(p @ Ap)
        if not curv > 0.0:
            raise NumericalError(f"PCG: nonpositive curvature {curv:.3e} at iteration {it}; "
                                 "operator is not positive definite")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        it += 1
        rnorm = float(np.linalg.norm(r))
        history.append(rnorm)
        if callback is not None:
            callback(x)
        if rnorm <= target:
            return x, SolveReport(it, rnorm, True, matvecs, history)
        z = precond.solve(r) if precond is not None else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolveReport(it, rnorm, False, matvecs, history)


def _givens(a, b):
    """Rotation (c, s) with c real and ``[c, s; -conj(s), c] @ [a, b] = [r, 0]``."""
    if b == 0:
        return 1.0, 0.0
    if a == 0:
        return 0.0, np.conj(b) / abs(b)
    t = math.hypot(abs(a), abs(b))
    c = abs(a) / t
    s = (a / abs(a)) * np.conj(b) / t
    return c, s


def gmres_solve(op, b, tol=DEFAULT_TOL, restart=GMRES_RESTART, max_iter=GMRES_MAX_ITER, x0=None):
    """Restarted GMRES with modified Gram-Schmidt Arnoldi and Givens rotations.

    Works in complex arithmetic whenever the operator or right-hand side is
    complex.  Convergence is confirmed on the true residual at the end of a
    cycle, so ``converged`` always means ``||b - op(x)|| <= tol * ||b||``.
    """
    op = as_operator(op)
    if restart < 1:
        raise DomainError("restart must be at least 1")
    if tol <= 0:
        raise DomainError("tol must be positive")
    b = np.asarray(b)
    if b.shape != (op.dimension,):
        raise InputError(f"right-hand side has shape {b.shape}, operator dimension {op.dimension}")
    cplx = np.iscomplexobj(b) or np.issubdtype(op.dtype, np.complexfloating)
    dtype = np.complex128 if cplx else np.float64
    b = b.astype(dtype)
    n = op.dimension
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n, dtype=dtype), SolveReport(0, 0.0, True, 0, [0.0])
    target = tol * bnorm
    matvecs = 0
    if x0 is None:
        x = np.zeros(n, dtype=dtype)
        r = b.copy()
    else:
        x = np.array(x0, dtype=dtype)
        r = b - op(x)
        matvecs += 1
    beta = float(np.linalg.norm(r))
    history = [beta]
    total = 0
    m = min(restart, n)
    V = np.empty((m + 1, n), dtype=dtype)
    H = np.zeros((m + 1, m), dtype=dtype)
    cs = np.zeros(m)
    sn = np.zeros(m, dtype=dtype)
    while beta > target and total < max_iter:
        V[0] = r / beta
        g = np.zeros(m + 1, dtype=dtype)
        g[0] = beta
        H[:] = 0
        j = 0
        breakdown = False
        while j < m and total < max_iter:
            w = np.array(op(V[j]), dtype=dtype)  # copy: op may return its input
            matvecs += 1
            total += 1
            wnorm0 = float(np.linalg.norm(w))
            for i in range(j + 1):
                H[i, j] = np.vdot(V[i], w)
                w -= H[i, j] * V[i]
            hnext = float(np.linalg.norm(w))
            H[j + 1, j] = hnext
            for i in range(j):
                a, c = H[i, j], H[i + 1, j]
                H[i, j] = cs[i] * a + sn[i] * c
                H[i + 1, j] = -np.conj(sn[i]) * a + cs[i] * c
            cs[j], sn[j] = _givens(H[j, j], H[j + 1, j])
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -np.conj(sn[j]) * g[j]
            g[j] = cs[j] * g[j]
            if H[j, j] == 0:
                raise NumericalError(f"GMRES: singular Hessenberg matrix at iteration {total}")
            res_est = abs(g[j + 1])
            history.append(float(res_est))
            j += 1
            if hnext <= 1e-14 * max(wnorm0, 1e-300):
                breakdown = True
                break
            if res_est <= target:
                break
            V[j] = w / hnext
        y = np.zeros(j, dtype=dtype)
        for i in range(j - 1, -1, -1):
            y[i] = (g[i] - H[i, i + 1:j] @ y[i + 1:j]) / H[i, i]
        x = x + V[:j].T @ y
        r = b - np.asarray(op(x), dtype=dtype)
        matvecs += 1
        beta = float(np.linalg.norm(r))
        if breakdown and beta > target:
            raise NumericalError(f"GMRES: Krylov breakdown with residual {beta:.3e} "
                                 f"> target {target:.3e}")
    return x, SolveReport(total, beta, beta <= target, matvecs, history)


def lanczos_extreme(op, which="max", iters=30, seed=0):
    """Ritz estimate of the largest (``which="max"``) or smallest eigenvalue.

    Symmetric Lanczos with full reorthogonalization from a seeded random
    start vector; ``iters`` is clamped to the operator dimension.  The raw
    Ritz value is returned: it never exceeds the true ``lambda_max`` (nor
    falls below ``lambda_min``), so callers needing a bound must inflate it.
    """
    if which not in ("max", "min"):
        raise InputError("which must be 'max' or 'min'")
    op = as_operator(op)
    n = op.dimension
    iters = max(1, min(int(iters), n))
    rng = np.random.Generator(np.random.PCG64(seed))
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    Q = np.empty((iters, n))
    alpha, beta = [], []
    for j in range(iters):
        Q[j] = q
        w = np.array(op(q), dtype=np.float64)
        a = float(q @ w)
        alpha.append(a)
        w -= Q[:j + 1].T @ (Q[:j + 1] @ w)
        w -= Q[:j + 1].T @ (Q[:j + 1] @ w)
        bnorm = float(np.linalg.norm(w))
        if j == iters - 1 or bnorm <= 1e-12 * max(abs(a), 1.0):
            break
        beta.append(bnorm)
        q = w / bnorm
    if not np.all(np.isfinite(alpha)):
        raise NumericalError("Lanczos produced non-finite coefficients")
    ritz = eigh_tridiagonal(np.array(alpha), np.array(beta), eigvals_only=True)
    return float(ritz[-1] if which == "max" else ritz[0])
