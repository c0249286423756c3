"""Matrix-free solution of ``(I + lam L_p) f = C y`` for negative integer ``p``.

``L_p = T^(-1/p) S_p^(1/p)`` with ``S_p = sum_i A_i^p`` and ``A_i`` the
shifted layer Laplacians.  Three nested levels:

1. an outer Krylov solve with ``I + lam L_p``;
2. ``L_p y`` by contour quadrature, which needs the shifted solves
   ``(z_j^2 I - S_p)^{-1} y``;
3. ``S_p y`` through ``|p|`` successive preconditioned CG solves per layer.

Nothing of size ``n x n`` is ever formed.
"""

from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .elliptic import contour_coefficients, num_contour_points, select_contour_points
from .errors import FactorizationError, InputError, NumericalError, DomainError
from .graph import shift_for_p
from .krylov import (LinearOperator, SolveReport, gmres_solve, incomplete_cholesky,
                     lanczos_extreme, pcg_solve)
from .powermean import finish_result

SHIFTED_SOLVERS = ("gmres", "shared")
OUTER_SOLVERS = ("gmres", "cg")


@dataclass(frozen=True)
class MatrixFreeConfig:
    """Settings of the matrix-free path.

    ``shifted_solver="shared"`` (default) builds one real Lanczos basis of
    ``S_p`` and ``y`` and takes the Galerkin solution for every contour node
    from it.  ``"gmres"`` solves each node by its own complex GMRES run.
    Both project onto the same Krylov space ``span{y, S_p y, ...}``; the
    shared basis needs about ``2N`` times fewer applications of ``S_p``.  ``refine_nodes`` raises ``N`` above the
    a-priori count until the scalar rule reaches ``tau_quadrature``.
    """

    p: int
    lam: float
    tau_quadrature: float = 1e-8
    outer_tol: float = 1e-8
    shifted_tol: float = 1e-8
    inner_tol: float = 1e-8
    ic_drop_tol: float = 1e-4
    safety: float = 1.01
    restart: int = 50
    max_iter: int = 1000
    shifted_max_iter: int = 1000
    pcg_max_iter: int = 500
    lanczos_iters: int = 30
    outer_solver: str = "gmres"
    shifted_solver: str = "shared"
    refine_nodes: bool = True
    self_loops: bool = False
    seed: int = 0

    def __post_init__(self):
        if int(self.p) != self.p or self.p > -1:
            raise DomainError(f"matrix-free path needs a negative integer p, got {self.p}")
        object.__setattr__(self, "p", int(self.p))
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise DomainError(f"lambda must be positive, got {self.lam}")
        for name in ("tau_quadrature", "outer_tol", "shifted_tol", "inner_tol"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise DomainError(f"{name} must lie in (0, 1), got {v}")
        if not 0 <= self.ic_drop_tol < 1:
            raise DomainError("ic_drop_tol must lie in [0, 1)")
        if self.safety < 1:
            raise DomainError("safety factor must be at least 1")
        if self.shifted_solver not in SHIFTED_SOLVERS:
            raise InputError(f"shifted_solver must be one of {SHIFTED_SOLVERS}")
        if self.outer_solver not in OUTER_SOLVERS:
            raise InputError(f"outer_solver must be one of {OUTER_SOLVERS}")


@dataclass(frozen=True)
class SpectralBounds:
    m: float
    M: float

    def __post_init__(self):
        if not (0 < self.m <= self.M) or not math.isfinite(self.M):
            raise NumericalError(f"invalid spectral bounds m={self.m}, M={self.M}")


@dataclass
class WorkCounters:
    """Counts of the nested solves, for the cost model."""

    s_applications: int = 0
    pcg_solves: int = 0
    pcg_iterations: int = 0
    shifted_iterations: int = 0
    lp_applications: int = 0


def factor_preconditioners(layers, drop_tol=1e-4, max_boost=8):
    """Incomplete Cholesky of every layer, retried with a growing diagonal boost on failure."""
    factors = []
    for t, layer in enumerate(layers):
        A = layer.matrix
        boost = 0.0
        for attempt in range(max_boost + 1):
            try:
                factors.append(incomplete_cholesky(A if boost == 0 else A.add_diagonal(boost),
                                                   drop_tol))
                break
            except FactorizationError:
                boost = 1e-3 if boost == 0 else 10 * boost
        else:
            raise NumericalError(f"layer {t}: incomplete Cholesky failed even with boost {boost:g}")
    return factors


def _solve_layer_power(layer, factor, y, power, tol, max_iter, t, counters):
    x = y
    for step in range(power):
        x, rep = pcg_solve(layer.matrix, x, factor, tol=tol, max_iter=max_iter)
        if counters is not None:
            counters.pcg_solves += 1
            counters.pcg_iterations += rep.iterations
        if not rep.converged:
            raise NumericalError(f"inner PCG did not converge on layer {t}, power step {step + 1} "
                                 f"(residual {rep.final_residual_norm:.3e} after {rep.iterations} "
                                 "iterations)")
    return x


def apply_S_p(layers, p, y, factors=None, tol=1e-8, max_iter=500, counters=None):
    """``S_p y = sum_i A_i^p y`` by ``|p|`` successive PCG solves per layer.

    Complex ``y`` is handled as two real solves.
    """
    if int(p) != p or p > -1:
        raise DomainError(f"apply_S_p needs a negative integer p, got {p}")
    y = np.asarray(y)
    if np.iscomplexobj(y):
        return (apply_S_p(layers, p, y.real, factors, tol, max_iter, counters)
                + 1j * apply_S_p(layers, p, y.imag, factors, tol, max_iter, counters))
    y = np.asarray(y, dtype=np.float64)
    if factors is None:
        factors = [None] * len(layers)
    if counters is not None:
        counters.s_applications += 1
    out = np.zeros_like(y)
    if not np.any(y):
        return out
    for t, (layer, factor) in enumerate(zip(layers, factors)):
        out += _solve_layer_power(layer, factor, y, -int(p), tol, max_iter, t, counters)
    return out


def estimate_spectral_bounds(layers, p, factors=None, safety=1.01, iters=30, seed=0, tol=1e-8,
                             counters=None):
    """Weyl lower bound and inflated Lanczos upper bound for the spectrum of ``S_p``.

    ``m = sum_i lambda_max(A_i)^p`` with each ``lambda_max`` estimated by
    Lanczos and inflated by ``safety`` (so that the power stays below the
    true value); ``M = safety * lambda_max(S_p)``.
    """
    n = layers[0].n
    lmax = [safety * lanczos_extreme(LinearOperator(n, layer.apply), "max", iters, seed)
            for layer in layers]
    m = float(sum(v ** p for v in lmax))
    op = LinearOperator(n, lambda v: apply_S_p(layers, p, v, factors, tol, counters=counters))
    M = safety * lanczos_extreme(op, "max", iters, seed)
    if not math.isfinite(M):
        raise NumericalError("Lanczos estimate of lambda_max(S_p) is not finite")
    return SpectralBounds(m, max(M, m))


# -- shifted solves ------------------------------------------------------------

def _shared_shifted_solves(S, y, shifts, tol, max_iter, counters):
    """Galerkin solutions of ``(sigma I - S) x = y`` for all shifts from one Lanczos basis.

    Returns ``(V, C)`` with ``x_j = V.T @ C[:, j]``.  The residual of shift
    ``j`` after ``k`` steps is ``beta_k |e_k^T (sigma_j I - T_k)^{-1} e_1| ||y||``.
    """
    n = len(y)
    ynorm = float(np.linalg.norm(y))
    max_iter = min(max_iter, n)
    V = np.empty((min(max_iter, 64) + 1, n))
    V[0] = y / ynorm
    alpha, beta = [], []
    for k in range(max_iter):
        w = np.array(S(V[k]), dtype=np.float64)
        a = float(V[k] @ w)
        alpha.append(a)
        w -= V[:k + 1].T @ (V[:k + 1] @ w)
        w -= V[:k + 1].T @ (V[:k + 1] @ w)
        b = float(np.linalg.norm(w))
        if counters is not None:
            counters.shifted_iterations += 1
        kk = k + 1
        ab = np.zeros((3, kk), dtype=np.complex128)
        ab[0, 1:] = -np.array(beta)
        ab[2, :-1] = -np.array(beta)
        rhs = np.zeros(kk, dtype=np.complex128)
        rhs[0] = ynorm
        C = np.empty((kk, len(shifts)), dtype=np.complex128)
        for j, sigma in enumerate(shifts):
            ab[1] = sigma - np.array(alpha)
            C[:, j] = solve_banded((1, 1), ab, rhs)
        res = b * np.abs(C[-1])
        if b <= 1e-14 * abs(a) or np.all(res <= tol * ynorm):
            return V[:kk], C
        beta.append(b)
        if kk == len(V):
            V = np.concatenate([V, np.empty((len(V), n))])
        V[kk] = w / b
    raise NumericalError(f"shared shifted solve did not reach tol={tol:g} in {max_iter} steps "
                         f"(worst node residual {res.max() / ynorm:.3e})")


class MatrixFreeSolver:
    """Preconditioners, spectral bounds and quadrature for one graph and one ``p``.

    All of it is computed once and reused for every class and every outer
    iteration.
    """

    def __init__(self, graph, config):
        self.config = config
        self.counters = WorkCounters()
        timings = {}
        t0 = time.perf_counter()
        self.eps = shift_for_p(config.p)
        self.layers = graph.shifted_laplacians(self.eps, config.self_loops)
        self.T = len(self.layers)
        self.n = graph.n
        self.factors = factor_preconditioners(self.layers, config.ic_drop_tol)
        timings["preconditioners"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        self.bounds = estimate_spectral_bounds(self.layers, config.p, self.factors, config.safety,
                                               config.lanczos_iters, config.seed, config.inner_tol)
        timings["bounds"] = time.perf_counter() - t0
        m, M = self.bounds.m, self.bounds.M
        if M <= m:
            M = m * (1 + 1e-12)
        self.n_formula = num_contour_points(m, M, config.tau_quadrature)
        if config.refine_nodes:
            self.quadrature = select_contour_points(m, M, config.p, config.tau_quadrature)
        else:
            self.quadrature = contour_coefficients(m, M, self.n_formula, config.p)
        self.timings = timings

    def with_config(self, config):
        """A view sharing this setup under ``config`` (same ``p``, ``tau``, drop tolerance)."""
        old = self.config
        if (config.p, config.tau_quadrature, config.ic_drop_tol, config.safety, config.self_loops) != \
                (old.p, old.tau_quadrature, old.ic_drop_tol, old.safety, old.self_loops):
            raise InputError("config changes settings that the cached setup depends on")
        clone = copy.copy(self)
        clone.config = config
        clone.counters = WorkCounters()
        return clone

    def S(self, y):
        c = self.config
        return apply_S_p(self.layers, c.p, y, self.factors, c.inner_tol, c.pcg_max_iter,
                         self.counters)

    def apply_L_p(self, y):
        c = self.config
        return apply_L_p(self.layers, c.p, y, self.quadrature, self.factors, c.shifted_tol,
                         c.inner_tol, c.shifted_solver, c.restart, c.shifted_max_iter,
                         c.pcg_max_iter, self.counters)

    def operator(self):
        lam = self.config.lam
        return LinearOperator(self.n, lambda x: x + lam * self.apply_L_p(x))

    def solve(self, b):
        c = self.config
        op = self.operator()
        if c.outer_solver == "cg":
            x, rep = pcg_solve(op, b, None, c.outer_tol, c.max_iter)
        else:
            x, rep = gmres_solve(op, b, c.outer_tol, c.restart, c.max_iter)
        if not rep.converged:
            raise NumericalError(f"outer solve did not converge (residual "
                                 f"{rep.final_residual_norm:.3e} after {rep.iterations} iterations)")
        return x, rep


def apply_L_p(layers, p, y, quadrature, factors=None, shifted_tol=1e-8, inner_tol=1e-8,
              shifted_solver="shared", restart=50, max_iter=1000, pcg_max_iter=500, counters=None):
    """``L_p y = T^(-1/p) S_p^(1/p) y`` by the contour rule ``quadrature``.

    The weighted shifted solutions are summed in node order, multiplied by
    ``S_p`` once, and the imaginary part is scaled by the prefactor and
    ``T^(-1/p)``.
    """
    if quadrature.p != p:
        raise InputError(f"quadrature was built for p={quadrature.p}, not {p}")
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    counters = counters if counters is not None else WorkCounters()
    counters.lp_applications += 1
    if not np.any(y):
        return np.zeros_like(y)

    def S(v):
        return apply_S_p(layers, p, v, factors, inner_tol, pcg_max_iter, counters)

    q = quadrature
    if shifted_solver == "shared":
        V, C = _shared_shifted_solves(S, y, q.shifts, shifted_tol, max_iter, counters)
        acc = V.T @ (C @ q.weights)
    elif shifted_solver == "gmres":
        acc = np.zeros(n, dtype=np.complex128)
        yc = y.astype(np.complex128)
        for j, (sigma, w) in enumerate(zip(q.shifts, q.weights)):
            op = LinearOperator(n, lambda x, s=sigma: s * x - S(x), np.complex128)
            x, rep = gmres_solve(op, yc, shifted_tol, restart, max_iter)
            counters.shifted_iterations += rep.iterations
            if not rep.converged:
                raise NumericalError(f"shifted GMRES did not converge at contour node {j} "
                                     f"(residual {rep.final_residual_norm:.3e})")
            acc += w * x
    else:
        raise InputError(f"shifted_solver must be one of {SHIFTED_SOLVERS}")
    out = len(layers) ** (-1.0 / p) * q.prefactor * S(acc.imag)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite value in L_p y")
    return out


def matfree_ssl_solve(graph, problem, config=None, solver=None):
    """Matrix-free counterpart of :func:`powermean.dense_ssl_solve`.

    Preconditioners, spectral bounds and the quadrature are set up once
    (or taken from ``solver``) and shared by the per-class outer solves.
    """
    if config is None:
        config = MatrixFreeConfig(p=problem.p, lam=problem.lam)
    if config.p != problem.p or config.lam != problem.lam:
        raise InputError("config and problem disagree on p or lambda")
    if graph.n != problem.n:
        raise InputError(f"graph has {graph.n} nodes, problem {problem.n}")
    try:
        solver = solver or MatrixFreeSolver(graph, config)
    except NumericalError as exc:
        raise NumericalError(f"matrix-free setup: {exc}") from exc
    B = problem.rhs()
    F = np.zeros((problem.n, problem.k))
    reports = []
    t0 = time.perf_counter()
    for r in range(problem.k):
        try:
            F[:, r], rep = solver.solve(B[:, r])
        except NumericalError as exc:
            raise NumericalError(f"matrix-free solve, class {r + 1}: {exc}") from exc
        reports.append(rep)
    timings = dict(solver.timings, solves=time.perf_counter() - t0)
    q = solver.quadrature
    info = {"m": solver.bounds.m, "M": solver.bounds.M, "N": q.N, "N_formula": solver.n_formula,
            "timings": timings, "counters": vars(solver.counters).copy()}
    return finish_result(F, problem, reports, "matrix-free", info)
