"""Multilayer stochastic block model: samplers, expected graphs and closed-form predicates.

Classes are contiguous blocks of equal size: node ``i`` belongs to class
``i // cluster_size`` (0-based).  Expected adjacency matrices include the
diagonal, sampled graphs never contain self-edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InputError, ScopeError
from .graph import MultilayerGraph, shift_for_p
from .powermean import scalar_power_mean
from .sparse import csr_from_arrays, csr_from_dense

# relative margin below a threshold that still counts as a strict inequality
TIE_RTOL = 1e-12


def make_rng(seed):
    """The package-wide generator: PCG64 seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class MsbmParams:
    """``k`` classes of ``cluster_size`` nodes; per-layer ``p_in`` / ``p_out``."""

    k: int
    cluster_size: int
    p_in: tuple
    p_out: tuple

    def __post_init__(self):
        p_in = tuple(float(x) for x in np.atleast_1d(self.p_in))
        p_out = tuple(float(x) for x in np.atleast_1d(self.p_out))
        if len(p_in) != len(p_out) or not p_in:
            raise InputError("p_in and p_out need one entry per layer")
        if self.k < 2 or self.cluster_size < 1:
            raise InputError("need k >= 2 and cluster_size >= 1")
        for q in p_in + p_out:
            if not 0.0 <= q <= 1.0:
                raise InputError(f"probability {q} outside [0, 1]")
        object.__setattr__(self, "p_in", p_in)
        object.__setattr__(self, "p_out", p_out)

    @property
    def T(self):
        return len(self.p_in)

    @property
    def n(self):
        return self.k * self.cluster_size

    def ground_truth(self):
        return np.repeat(np.arange(self.k), self.cluster_size)


@dataclass(frozen=True)
class LabelBudget:
    """Number of labeled nodes per class."""

    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if not counts or min(counts) < 0:
            raise InputError("label counts must be nonnegative")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def uniform(cls, k, count):
        return cls((int(count),) * k)

    @classmethod
    def from_fraction(cls, k, cluster_size, fraction):
        """``round(fraction * cluster_size)`` per class, at least one."""
        return cls.uniform(k, max(1, int(round(fraction * cluster_size))))

    def check(self, params):
        if len(self.counts) != params.k:
            raise InputError(f"budget has {len(self.counts)} classes, model has {params.k}")
        for r, c in enumerate(self.counts):
            if not 1 <= c <= params.cluster_size:
                raise InputError(f"class {r + 1}: need 1 <= n_r <= {params.cluster_size}, got {c}")


# -- sampling -----------------------------------------------------------------

def _sample_block(rng, size_a, size_b, prob, within):
    """Bernoulli(prob) entries of a size_a x size_b block; strict upper triangle if within."""
    total = size_a * size_b
    if prob <= 0.0 or total == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    count = rng.binomial(total, prob)
    flat = rng.choice(total, size=count, replace=False, shuffle=False)
    flat.sort()
    i, j = np.divmod(flat, size_b)
    if within:
        keep = i < j
        i, j = i[keep], j[keep]
    return i, j


def _sample_layer(rng, groups, prob_of):
    """Sample one undirected layer; ``groups`` lists node-index arrays, ``prob_of(a, b)`` the block probability."""
    n = sum(len(g) for g in groups)
    rows, cols = [], []
    for a in range(len(groups)):
        for b in range(a, len(groups)):
            i, j = _sample_block(rng, len(groups[a]), len(groups[b]), prob_of(a, b), a == b)
            rows.append(groups[a][i])
            cols.append(groups[b][j])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    return csr_from_arrays(np.concatenate([r, c]), np.concatenate([c, r]), np.ones(2 * len(r)), n, n)


def sample_msbm(params, seed=0):
    """Draw one multilayer graph: independent unweighted layers, no self-edges."""
    rng = make_rng(seed)
    groups = [np.arange(r * params.cluster_size, (r + 1) * params.cluster_size)
              for r in range(params.k)]
    layers = []
    for t in range(params.T):
        pin, pout = params.p_in[t], params.p_out[t]
        layers.append(_sample_layer(rng, groups, lambda a, b: pin if a == b else pout))
    return MultilayerGraph(tuple(layers))


def sample_labels(truth, budget, seed=0):
    """Labeled mask with ``budget`` nodes per class drawn uniformly without replacement."""
    truth = np.asarray(truth, dtype=np.int64)
    counts = budget.counts if isinstance(budget, LabelBudget) else tuple(np.atleast_1d(budget))
    k = int(truth.max()) + 1
    if len(counts) == 1 and k > 1:
        counts = counts * k
    if len(counts) != k:
        raise InputError(f"budget has {len(counts)} classes, truth has {k}")
    rng = make_rng(seed)
    mask = np.zeros(len(truth), dtype=bool)
    for r in range(k):
        members = np.flatnonzero(truth == r)
        c = int(counts[r])
        if not 0 <= c <= len(members):
            raise InputError(f"class {r + 1} has {len(members)} nodes, cannot label {c}")
        mask[rng.choice(members, size=c, replace=False)] = True
    return mask


def first_nodes_mask(params, budget):
    """Deterministic mask labeling the first ``n_r`` nodes of each class."""
    budget.check(params)
    mask = np.zeros(params.n, dtype=bool)
    for r, c in enumerate(budget.counts):
        mask[r * params.cluster_size: r * params.cluster_size + c] = True
    return mask


# -- expected case ------------------------------------------------------------

def _indicators(params):
    return np.kron(np.eye(params.k), np.ones((params.cluster_size, 1)))


def expected_adjacency(params, t=0):
    """``(p_in - p_out) sum_r 1_Cr 1_Cr^T + p_out 1 1^T``, diagonal included."""
    B = _indicators(params)
    pin, pout = params.p_in[t], params.p_out[t]
    return (pin - pout) * (B @ B.T) + pout * np.ones((params.n, params.n))


def expected_graph(params):
    return MultilayerGraph(tuple(csr_from_dense(expected_adjacency(params, t))
                                 for t in range(params.T)))


def canonical_eigenvectors(k, cluster_size):
    """``chi_1 = 1`` and ``chi_r = sum_{j<=r} 1_Cj - r 1_Cr``; returned as rows of a k x n array."""
    if k < 1 or cluster_size < 1:
        raise InputError("need k >= 1 and cluster_size >= 1")
    X = np.zeros((k, k))
    X[0] = 1.0
    for r in range(2, k + 1):
        X[r - 1, :r] = 1.0
        X[r - 1, r - 1] = 1.0 - r
    return np.repeat(X, cluster_size, axis=1)


def chi_norm_sq(r, cluster_size, k):
    """``||chi_r||^2``: ``n`` for r=1, ``|C| r (r-1)`` otherwise (1-based r)."""
    return k * cluster_size if r == 1 else cluster_size * r * (r - 1)


def rho_epsilon(params, eps=0.0):
    """Per-layer ``1 - (p_in - p_out) / (p_in + (k-1) p_out) + eps``."""
    out = np.empty(params.T)
    for t in range(params.T):
        pin, pout = params.p_in[t], params.p_out[t]
        den = pin + (params.k - 1) * pout
        if den <= 0:
            raise DomainError(f"layer {t}: p_in + (k-1) p_out must be positive")
        out[t] = 1.0 - (pin - pout) / den + eps
    return out


def _default_eps(p, eps):
    if eps is not None:
        return float(eps)
    return 0.0 if math.isinf(p) else shift_for_p(p)

def expected_mean_rho(params, p, eps=None):
    eps = _default_eps(float(p), eps)
    return scalar_power_mean(rho_epsilon(params, eps), p), eps


def predict_zero_error(params, p, eps=None):
    """Expected-case zero-test-error predicate ``m_p(rho_eps) < 1 + eps``.

    For ``p = -inf`` this is "some layer has p_out < p_in", for ``p = +inf``
    "every layer has p_out < p_in".
    """
    p = float(p)
    if p == -math.inf:
        return any(po < pi for pi, po in zip(params.p_in, params.p_out))
    if p == math.inf:
        return all(po < pi for pi, po in zip(params.p_in, params.p_out))
    mp, eps = expected_mean_rho(params, p, eps)
    # an exact tie m_p = 1 + eps gives beta = 0 and tied scores; keep it on the false side
    return bool(mp < (1.0 + eps) * (1.0 - TIE_RTOL))


def unbalanced_bounds(eps, n1, n2):
    """Exact and sufficient thresholds on ``m_p(rho_eps)`` for k=2 with n1, n2 labels.

    Returns ``(exact, sufficient)`` where ``exact`` is the two-term minimum
    valid for any shift and ``sufficient = min(n1/n2, n2/n1)``.
    """
    if n1 < 1 or n2 < 1:
        raise InputError("both classes need at least one label")
    s = n1 + n2
    a = s * ((1 + eps) ** 2 + 1)
    exact = min((a - 2 * n2) / (2 * n2 + s * eps), (a - 2 * n1) / (2 * n1 + s * eps))
    return exact, min(n1 / n2, n2 / n1)


def predict_zero_error_unbalanced(params, p, n1, n2, eps=None, lam=1.0, form="exact"):
    """Zero-error predicate for two classes with ``n1 != n2`` labels and uniform loss.

    Only ``k = 2`` and ``lam = 1`` are covered; other values raise
    :class:`ScopeError` rather than extrapolate.
    """
    if params.k != 2:
        raise ScopeError(f"unbalanced predicate covers k=2 only, got k={params.k}")
    if lam != 1.0:
        raise ScopeError(f"unbalanced predicate covers lambda=1 only, got {lam}")
    if form not in ("exact", "sufficient"):
        raise InputError("form must be 'exact' or 'sufficient'")
    mp, eps = expected_mean_rho(params, p, eps)
    exact, sufficient = unbalanced_bounds(eps, n1, n2)
    return bool(mp < (exact if form == "exact" else sufficient) * (1.0 - TIE_RTOL))


def expected_solution_matrix(params, p, labeled_mask, eps=None, cost=None, mu=1.0):
    """Closed-form ``F`` on the expected graph.

    ``cost`` holds one positive weight per class (``None`` means all ones);
    ``labeled_mask`` must respect class boundaries of ``params``.  Unlabeled
    node ``i`` of class ``l`` receives, in column ``r``,
    ``c_r n_r (alpha / n + beta X(l, r))`` with ``X`` from the canonical
    eigenvectors; labeled nodes additionally get ``omega c_r`` in their own
    class column.
    """
    p = float(p)
    mask = np.asarray(labeled_mask, dtype=bool)
    k, C, n = params.k, params.cluster_size, params.n
    if mask.shape != (n,):
        raise InputError("labeled_mask length differs from n")
    truth = params.ground_truth()
    counts = np.bincount(truth[mask], minlength=k).astype(float)
    c = np.ones(k) if cost is None else np.asarray(cost, dtype=float)
    if c.shape != (k,) or np.any(c <= 0):
        raise InputError("cost must hold one positive weight per class")
    eps = _default_eps(p, eps)
    mp = scalar_power_mean(rho_epsilon(params, eps), p)
    omega = 1.0 / (1.0 + mu * (1.0 + eps))
    alpha = 1.0 / (1.0 + mu * eps) - omega
    beta = 1.0 / (1.0 + mu * mp) - omega
    nsq = [chi_norm_sq(r, C, k) for r in range(1, k + 1)]

    def tail(r):
        return sum(1.0 / nsq[j - 1] for j in range(r + 1, k + 1))

    X = np.empty((k, k))  # X[l-1, r-1], 1-based l, r as in the case analysis
    for l in range(1, k + 1):
        for r in range(1, k + 1):
            if r < l:
                X[l - 1, r - 1] = (1 - l) / nsq[l - 1] + tail(l)
            elif r > l:
                X[l - 1, r - 1] = (1 - r) / nsq[r - 1] + tail(r)
            else:
                X[l - 1, r - 1] = ((1 - r) ** 2 / nsq[r - 1] if r > 1 else 0.0) + tail(r)
    block = c * counts * (alpha / n + beta * X)
    F = block[truth]
    lab = np.flatnonzero(mask)
    F[lab, truth[lab]] += omega * c[truth[lab]]
    return F


# -- information-independent layers ------------------------------------------

def _info_groups(cluster_size, t):
    members = np.arange(t * cluster_size, (t + 1) * cluster_size)
    rest = np.setdiff1d(np.arange(3 * cluster_size), members)
    return members, rest


def expected_3layer_info_independent(p_in, p_out, cluster_size):
    """Expected layers where layer ``t`` only separates class ``t`` from the other two."""
    n = 3 * cluster_size
    layers = []
    for t in range(3):
        inside = np.zeros(n, dtype=bool)
        inside[t * cluster_size:(t + 1) * cluster_size] = True
        same = inside[:, None] == inside[None, :]
        layers.append(csr_from_dense(np.where(same, p_in, p_out)))
    return MultilayerGraph(tuple(layers))


def sample_3layer_info_independent(p_in, p_out, cluster_size, seed=0):
    rng = make_rng(seed)
    layers = []
    for t in range(3):
        groups = list(_info_groups(cluster_size, t))
        layers.append(_sample_layer(rng, groups, lambda a, b: p_in if a == b else p_out))
    return MultilayerGraph(tuple(layers))
