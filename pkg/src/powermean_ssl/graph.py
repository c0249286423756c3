"""Multilayer graphs, normalized Laplacians and kNN layer construction."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegreeError, DomainError, InputError
from .sparse import SparseMatrix, csr_from_arrays, read_mtx, spmv


def shift_for_p(p):
    """Diagonal shift used for ``p <= 0``: ``log10(1 + |p|) + 1e-6``; zero for ``p > 0``."""
    p = float(p)
    if not math.isfinite(p):
        raise DomainError(f"shift_for_p needs finite p, got {p}")
    if p > 0:
        return 0.0
    return math.log10(1.0 + abs(p)) + 1e-6


def add_self_loops(W, only_isolated=True):
    """Give isolated nodes (or every node) a unit self-loop."""
    deg = W.row_sums()
    nodes = np.flatnonzero(deg <= 0) if only_isolated else np.arange(W.n_rows)
    if len(nodes) == 0:
        return W
    return csr_from_arrays(np.concatenate([W.row_ids(), nodes]), np.concatenate([W.col_idx, nodes]),
                           np.concatenate([W.values, np.ones(len(nodes))]), W.n_rows, W.n_cols)


def normalized_laplacian(W, self_loops=False, layer=None):
    """``I - D^{-1/2} W D^{-1/2}`` as a CSR matrix.

    The scaling of entry ``(i, j)`` is ``w_ij * (s_i * s_j)`` with
    ``s = D^{-1/2}``, so a bit-exactly symmetric ``W`` gives a bit-exactly
    symmetric Laplacian.  Isolated nodes raise :class:`DegreeError` unless
    ``self_loops`` is set, in which case they receive a unit self-loop.
    """
    if W.n_rows != W.n_cols:
        raise InputError("adjacency matrix must be square")
    if self_loops:
        W = add_self_loops(W)
    deg = W.row_sums()
    bad = np.flatnonzero(deg <= 0)
    if len(bad):
        raise DegreeError(bad[0], layer)
    s = 1.0 / np.sqrt(deg)
    rows, cols = W.row_ids(), W.col_idx
    scaled = -(W.values * (s[rows] * s[cols]))
    n = W.n_rows
    idx = np.arange(n, dtype=np.int64)
    return csr_from_arrays(np.concatenate([rows, idx]), np.concatenate([cols, idx]),
                           np.concatenate([scaled, np.ones(n)]), n, n)


@dataclass(frozen=True)
class ShiftedLaplacian:
    """The SPD layer operator ``L_sym + shift * I``."""

    base: SparseMatrix
    shift: float = 0.0
    _matrix: SparseMatrix = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.shift < 0:
            raise DomainError("shift must be nonnegative")
        object.__setattr__(self, "_matrix", self.base.add_diagonal(self.shift)
                           if self.shift else self.base)

    @property
    def matrix(self):
        return self._matrix

    @property
    def n(self):
        return self.base.n_rows

    def apply(self, x):
        return spmv(self._matrix, x)


@dataclass(frozen=True, eq=False)
class MultilayerGraph:
    """``T`` symmetric nonnegative adjacency layers over a shared node set.

    Laplacians are computed lazily and cached per self-loop policy.
    """

    layers: tuple
    layer_names: tuple = ()
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise InputError("a multilayer graph needs at least one layer")
        n = layers[0].n_rows
        for t, W in enumerate(layers):
            if W.n_rows != n or W.n_cols != n:
                raise InputError(f"layer {t} has shape {W.shape}, expected ({n}, {n})")
            if np.any(W.values < 0):
                raise InputError(f"layer {t} has negative weights")
            if not W.is_symmetric():
                raise InputError(f"layer {t} is not symmetric")
        names = tuple(self.layer_names) or tuple(f"layer{t}" for t in range(len(layers)))
        if len(names) != len(layers):
            raise InputError("one name per layer required")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "layer_names", names)

    @property
    def n(self):
        return self.layers[0].n_rows

    @property
    def T(self):
        return len(self.layers)

    def laplacians(self, self_loops=False):
        key = ("lsym", bool(self_loops))
        if key not in self._cache:
            self._cache[key] = tuple(normalized_laplacian(W, self_loops, name)
                                     for W, name in zip(self.layers, self.layer_names))
        return self._cache[key]

    def shifted_laplacians(self, shift, self_loops=False):
        return [ShiftedLaplacian(L, shift) for L in self.laplacians(self_loops)]

    def dense_laplacians(self, self_loops=False):
        return [L.to_dense() for L in self.laplacians(self_loops)]


# -- kNN layers ------------------------------------------------------------

def pearson_matrix(features):
    """Dense Pearson correlation between the rows of ``features``."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise InputError("features must be a 2-d array")
    Z = X - X.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(Z, axis=1)
    bad = np.flatnonzero(norms == 0)
    if len(bad):
        raise InputError(f"feature row {bad[0]} has zero variance")
    Z /= norms[:, None]
    return Z @ Z.T


def knn_graph(features, k, symmetrize="union", block_size=2048):
    """Unweighted symmetric k-nearest-neighbour graph under Pearson correlation.

    Every node keeps its ``k`` most correlated other nodes.  Correlations
    are rounded to 12 decimals before ranking so that rounding noise cannot
    break ties; remaining ties go to the lower node index.  ``symmetrize``
    is ``"union"`` (edge if either endpoint selects the other) or
    ``"mutual"`` (both must).
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise InputError("features must be a 2-d array")
    n = X.shape[0]
    k = int(k)
    if k < 1 or n < k + 1:
        raise InputError(f"need 1 <= k <= n-1, got k={k}, n={n}")
    if symmetrize not in ("union", "mutual"):
        raise InputError("symmetrize must be 'union' or 'mutual'")
    Z = X - X.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(Z, axis=1)
    bad = np.flatnonzero(norms == 0)
    if len(bad):
        raise InputError(f"feature row {bad[0]} has zero variance")
    Z /= norms[:, None]
    nbrs = np.empty((n, k), dtype=np.int64)
    for lo in range(0, n, block_size):
        hi = min(n, lo + block_size)
        C = np.round(Z[lo:hi] @ Z.T, 12)
        C[np.arange(hi - lo), np.arange(lo, hi)] = -np.inf
        nbrs[lo:hi] = np.argsort(-C, axis=1, kind="stable")[:, :k]
    rows = np.repeat(np.arange(n, dtype=np.int64), k)
    cols = nbrs.ravel()
    if symmetrize == "union":
        r = np.concatenate([rows, cols])
        c = np.concatenate([cols, rows])
        A = csr_from_arrays(r, c, np.ones(len(r)), n, n)
        return csr_from_arrays(A.row_ids(), A.col_idx, np.ones(A.nnz), n, n)
    A = csr_from_arrays(rows, cols, np.ones(len(rows)), n, n)
    At = A.transpose()
    both = A.to_scipy().multiply(At.to_scipy()).tocoo()
    return csr_from_arrays(both.row, both.col, np.ones(both.nnz), n, n)


# -- file ingestion --------------------------------------------------------

def _read_numeric_csv(path):
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    if not rows:
        raise InputError(f"{path}: empty file")
    try:
        [float(x) for x in rows[0]]
    except ValueError:
        rows = rows[1:]  # header line
    try:
        data = np.array([[float(x) for x in r] for r in rows])
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric entry ({exc})") from exc
    if data.ndim != 2 or len({len(r) for r in rows}) != 1:
        raise InputError(f"{path}: ragged rows")
    return data


def read_labels(path, n=None, n_classes=None):
    """Read ``node_id,class`` rows (0-based ids, classes 1..k); returns 0-based classes."""
    data = _read_numeric_csv(path)
    if data.shape[1] != 2:
        raise InputError(f"{path}: expected two columns node_id,class")
    ids = data[:, 0].astype(np.int64)
    cls = data[:, 1].astype(np.int64)
    if np.any(data[:, 0] != ids) or np.any(data[:, 1] != cls):
        raise InputError(f"{path}: ids and classes must be integers")
    n = len(ids) if n is None else n
    if sorted(ids.tolist()) != list(range(n)):
        raise InputError(f"{path}: node ids must cover 0..{n - 1} exactly once")
    if np.any(cls < 1) or (n_classes is not None and np.any(cls > n_classes)):
        bad = cls[(cls < 1) | ((cls > n_classes) if n_classes is not None else False)][0]
        raise InputError(f"{path}: unknown class id {bad}")
    labels = np.empty(n, dtype=np.int64)
    labels[ids] = cls - 1
    return labels


def write_labels(path, labels):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "class"])
        for i, c in enumerate(np.asarray(labels).tolist()):
            w.writerow([i, c + 1])


def read_features(path):
    return _read_numeric_csv(path)


def load_multilayer(layer_paths=(), labels_path=None, features_paths=(), knn_k=10,
                    n_classes=None, symmetrize="union"):
    """Assemble a :class:`MultilayerGraph` from files.

    ``.mtx`` layers are read as-is; each features CSV (one row per node)
    becomes a kNN layer.  Returns ``(graph, labels)`` with 0-based labels,
    or ``labels=None`` when no label file is given.
    """
    layers, names = [], []
    for p in layer_paths:
        layers.append(read_mtx(p))
        names.append(Path(p).stem)
    for p in features_paths:
        layers.append(knn_graph(read_features(p), knn_k, symmetrize=symmetrize))
        names.append(Path(p).stem)
    if not layers:
        raise InputError("no layers given")
    n = layers[0].n_rows
    for W, name in zip(layers, names):
        if W.shape != (n, n):
            raise InputError(f"layer {name!r} has shape {W.shape}, expected ({n}, {n})")
    graph = MultilayerGraph(tuple(layers), tuple(names))
    labels = read_labels(labels_path, n, n_classes) if labels_path is not None else None
    return graph, labels
