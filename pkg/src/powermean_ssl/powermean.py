"""Scalar and matrix power means, the dense power mean Laplacian and the dense SSL solve."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import DomainError, InputError, NumericalError
from .graph import MultilayerGraph, shift_for_p
from .krylov import SolveReport

NEG_CLAMP = 1e-10
EIG_FLOOR = 1e-14


def scalar_power_mean(xs, p):
    """``((1/T) sum x_i**p)**(1/p)`` with the limits p=0 (geometric), p=+-inf (max/min).

    >>> scalar_power_mean([4.0, 1.0], -1)
    1.6
    """
    x = np.asarray(xs, dtype=np.float64).ravel()
    if x.size == 0:
        raise InputError("power mean of an empty sequence")
    p = float(p)
    if math.isnan(p):
        raise DomainError("p must not be NaN")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise DomainError("power mean arguments must be finite and nonnegative")
    if p == math.inf:
        return float(x.max())
    if p == -math.inf:
        return float(x.min())
    if np.any(x == 0) and p <= 0:
        raise DomainError(f"zero argument is not allowed for p={p:g} <= 0")
    if p == 0:
        return float(np.exp(np.mean(np.log(x))))
    if x.min() > 0:
        logs = np.log(x)
        c = logs - logs.mean()
        if abs(p) * np.max(np.abs(c)) < 1e-5:
            # cumulant series of log M_p; avoids dividing subnormal quantities
            k2, k3 = np.mean(c ** 2), np.mean(c ** 3)
            return float(np.exp(logs.mean() + p * k2 / 2 + p * p * k3 / 6))
    # scaling by ref keeps p*log(x/ref) <= 0 (no overflow); expm1/log1p keep
    # tiny |p| accurate, where (x/ref)**p would round to 1
    ref = x.max() if p > 0 else x.min()
    if ref == 0.0:
        return 0.0
    with np.errstate(divide="ignore"):  # zero entries (p > 0 only) give log 0 = -inf
        t = np.expm1(p * np.log(x / ref))
    return float(ref * np.exp(np.log1p(np.mean(t)) / p))


def _eigh_sym(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError("matrix must be square")
    return np.linalg.eigh(0.5 * (A + A.T))


def _recompose(vecs, vals):
    X = (vecs * vals) @ vecs.T
    return 0.5 * (X + X.T)


def _clamped_eigs(vals, p):
    if p < 0 or p == 0:
        if vals.min() < -NEG_CLAMP:
            raise NumericalError(f"eigenvalue {vals.min():.3e} is negative beyond the clamp "
                                 f"threshold; A^{p:g} is undefined")
        return np.maximum(vals, EIG_FLOOR)
    # below the eigensolver's backward error an eigenvalue is numerically zero;
    # without this, fractional powers would amplify that noise (1e-16**0.1 ~ 0.025)
    noise = len(vals) * np.finfo(float).eps * max(abs(vals).max(), 1.0)
    return np.where(vals <= noise, 0.0, vals)


def dense_matrix_power(A, p):
    """``A**p`` for symmetric PSD ``A`` via its eigendecomposition.

    Eigenvalues in ``(-1e-10, 1e-14)`` are raised to ``1e-14`` before a
    negative power is taken; anything more negative raises.  For positive
    powers, eigenvalues below ``n * eps * max(||A||, 1)`` count as zero.
    """
    p = float(p)
    if not math.isfinite(p):
        raise DomainError("dense_matrix_power needs finite p")
    vals, vecs = _eigh_sym(A)
    if p == 0:
        return np.eye(len(vals))
    return _recompose(vecs, _clamped_eigs(vals, p) ** p)


def dense_matrix_log(A):
    vals, vecs = _eigh_sym(A)
    return _recompose(vecs, np.log(_clamped_eigs(vals, -1.0)))


def dense_matrix_exp(A):
    vals, vecs = _eigh_sym(A)
    return _recompose(vecs, np.exp(vals))


def _commute(mats, rtol=1e-10):
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            A, B = mats[i], mats[j]
            scale = max(np.linalg.norm(A) * np.linalg.norm(B), 1.0)
            if np.linalg.norm(A @ B - B @ A) > rtol * scale:
                return False
    return True


def joint_eigenvalues(mats, seed=0):
    """Common eigenbasis of commuting symmetric matrices and each matrix's eigenvalues in it.

    The basis diagonalizes a random combination of the inputs; for commuting
    inputs that basis diagonalizes all of them with probability one.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    coef = rng.uniform(0.5, 1.5, len(mats))
    _, U = _eigh_sym(sum(c * A for c, A in zip(coef, mats)))
    vals = np.array([np.einsum("ij,ij->j", U, A @ U) for A in mats])
    return U, vals


def _columnwise_power_mean(vals, p):
    if p == math.inf:
        return vals.max(axis=0)
    if p == -math.inf:
        return vals.min(axis=0)
    vals = np.array([_clamped_eigs(v, p) for v in vals])
    if p == 0:
        return np.exp(np.mean(np.log(vals), axis=0))
    ref = vals.max(axis=0) if p > 0 else vals.min(axis=0)
    safe = np.where(ref > 0, ref, 1.0)
    out = safe * np.mean((vals / safe) ** p, axis=0) ** (1.0 / p)
    return np.where(ref > 0, out, 0.0)


def _layer_matrices(graph, self_loops):
    if isinstance(graph, MultilayerGraph):
        return graph.dense_laplacians(self_loops)
    return [np.asarray(L, dtype=np.float64) for L in graph]


def dense_power_mean_laplacian(graph, p, eps=None, self_loops=False):
    """Dense ``L_p = ((1/T) sum (L_i + eps I)**p)**(1/p)``.

    ``graph`` is a :class:`MultilayerGraph` or a sequence of dense
    normalized Laplacians.  ``eps`` defaults to :func:`shift_for_p`.  For
    ``p = 0`` the log-Euclidean limit ``exp((1/T) sum log(L_i + eps I))`` is
    used.  ``p = +-inf`` is only defined when the shifted layers commute; it
    takes the eigenvalue-wise max/min in their joint eigenbasis (with
    ``eps = 0`` unless given).
    """
    p = float(p)
    mats = _layer_matrices(graph, self_loops)
    if not mats:
        raise InputError("no layers")
    n = mats[0].shape[0]
    if eps is None:
        eps = 0.0 if math.isinf(p) else shift_for_p(p)
    A = [L + eps * np.eye(n) for L in mats]
    T = len(A)
    if T == 1 and not math.isinf(p):
        return 0.5 * (A[0] + A[0].T)
    commuting = _commute(A)
    if math.isinf(p) and not commuting:
        raise DomainError("p = +-inf is only defined for commuting (expected-case) layers")
    if commuting:
        # scalar means in the joint eigenbasis; avoids taking the root of a
        # matrix sum whose small eigenvalues carry absolute rounding error
        U, vals = joint_eigenvalues(A)
        return _recompose(U, _columnwise_power_mean(vals, p))
    if p == 0:
        return dense_matrix_exp(sum(dense_matrix_log(X) for X in A) / T)
    S = sum(dense_matrix_power(X, p) for X in A) / T
    return dense_matrix_power(S, 1.0 / p)


# -- labeling problems -------------------------------------------------------

def class_counts(truth, labeled_mask, n_classes):
    return np.bincount(np.asarray(truth)[np.asarray(labeled_mask, bool)], minlength=n_classes)


@dataclass(frozen=True, eq=False)
class LabelingProblem:
    """Label matrix ``Y`` (n x k), labeled mask, ``lam``, ``p``, optional per-node cost ``C``.

    ``truth`` (0-based classes, optional) is only used to score the result.
    """

    Y: np.ndarray
    labeled_mask: np.ndarray
    lam: float
    p: float
    cost: np.ndarray | None = None
    truth: np.ndarray | None = None

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=np.float64)
        mask = np.asarray(self.labeled_mask, dtype=bool)
        if Y.ndim != 2 or mask.shape != (Y.shape[0],):
            raise InputError("Y must be n x k and labeled_mask length n")
        if not np.all((Y == 0) | (Y == 1)):
            raise InputError("Y must be a 0/1 matrix")
        rows = Y.sum(axis=1)
        if np.any(rows[mask] != 1) or np.any(rows[~mask] != 0):
            raise InputError("labeled rows need exactly one 1, unlabeled rows none")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise DomainError(f"lambda must be positive, got {self.lam}")
        if math.isnan(float(self.p)):
            raise DomainError("p must not be NaN")
        cost = None
        if self.cost is not None:
            cost = np.asarray(self.cost, dtype=np.float64)
            if cost.shape != (Y.shape[0],) or np.any(cost[mask] <= 0) or not np.all(np.isfinite(cost)):
                raise InputError("cost must be a finite per-node array, positive on labeled nodes")
        truth = None
        if self.truth is not None:
            truth = np.asarray(self.truth, dtype=np.int64)
            if truth.shape != (Y.shape[0],) or truth.min() < 0 or truth.max() >= Y.shape[1]:
                raise InputError("truth must hold one class in 0..k-1 per node")
            if np.any(Y[mask].argmax(axis=1) != truth[mask]):
                raise InputError("labels in Y disagree with truth")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "labeled_mask", mask)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "truth", truth)

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def k(self):
        return self.Y.shape[1]

    def rhs(self):
        """The right-hand sides ``C Y`` as an n x k array."""
        return self.Y if self.cost is None else self.Y * self.cost[:, None]

    @classmethod
    def from_labels(cls, truth, labeled_mask, lam, p, n_classes=None, weighting="uniform"):
        """Build a problem from ground truth and a labeled mask.

        ``weighting="balanced"`` sets ``C_ii = n / n_r`` for labeled nodes of
        class ``r`` (``n_r`` labeled nodes in that class).
        """
        truth = np.asarray(truth, dtype=np.int64)
        mask = np.asarray(labeled_mask, dtype=bool)
        k = int(truth.max()) + 1 if n_classes is None else int(n_classes)
        n = len(truth)
        Y = np.zeros((n, k))
        Y[np.flatnonzero(mask), truth[mask]] = 1.0
        if weighting == "uniform":
            cost = None
        elif weighting == "balanced":
            counts = class_counts(truth, mask, k)
            cost = np.ones(n)
            lab = np.flatnonzero(mask)
            cost[lab] = n / counts[truth[lab]]
        else:
            raise InputError(f"unknown weighting {weighting!r}")
        return cls(Y, mask, lam, p, cost, truth)


@dataclass
class LabelingResult:
    F: np.ndarray
    predicted_labels: np.ndarray
    test_error: float | None
    reports: list = field(default_factory=list)
    path: str = "dense"
    info: dict = field(default_factory=dict)


def assign_labels(F, labeled_mask=None):
    """Row-wise argmax of ``F``; ties go to the lowest class index."""
    F = np.asarray(F, dtype=np.float64)
    if not np.all(np.isfinite(F)):
        raise NumericalError("F contains non-finite entries")
    return np.argmax(F, axis=1)


def test_error(pred, truth, labeled_mask):
    """Fraction of unlabeled nodes whose predicted class differs from ``truth``."""
    if truth is None:
        raise InputError("ground truth is required to compute a test error")
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    unl = ~np.asarray(labeled_mask, dtype=bool)
    if not unl.any():
        raise InputError("no unlabeled nodes; test error is undefined")
    return float(np.mean(pred[unl] != truth[unl]))


test_error.__test__ = False  # keep pytest from collecting this helper


def finish_result(F, problem, reports, path, info=None):
    pred = assign_labels(F)
    err = None
    if problem.truth is not None and not problem.labeled_mask.all():
        err = test_error(pred, problem.truth, problem.labeled_mask)
    return LabelingResult(F, pred, err, reports, path, info or {})


def dense_ssl_solve(L_p, problem):
    """Solve ``(I + lam L_p) f = C Y^(r)`` for every class by dense Cholesky."""
    L_p = np.asarray(L_p, dtype=np.float64)
    n = problem.n
    if L_p.shape != (n, n):
        raise InputError(f"L_p has shape {L_p.shape}, problem has n={n}")
    A = np.eye(n) + problem.lam * L_p
    try:
        factor = cho_factor(A, lower=True, check_finite=True)
    except LinAlgError as exc:
        raise NumericalError(f"I + lambda L_p is not positive definite: {exc}") from exc
    B = problem.rhs()
    F = cho_solve(factor, B)
    reports = []
    for r in range(problem.k):
        res = float(np.linalg.norm(A @ F[:, r] - B[:, r]))
        reports.append(SolveReport(0, res, True, 0, [res]))
    return finish_result(F, problem, reports, "dense")
