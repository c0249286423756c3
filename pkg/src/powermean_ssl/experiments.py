"""Experiment harness: MSBM sweeps, lambda sweeps, timing and dataset runs.

Every experiment returns a list of :class:`ResultRow` in a fixed grid
order.  Cells are independent and may be spread over worker processes
(``POWERMEAN_SSL_WORKERS``); results are always collected in grid order, so
the output does not depend on the worker count.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .errors import ConfigError
from .graph import MultilayerGraph, load_multilayer
from .matfree import MatrixFreeConfig, MatrixFreeSolver, matfree_ssl_solve
from .msbm import (LabelBudget, MsbmParams, expected_graph, first_nodes_mask,
                   predict_zero_error, predict_zero_error_unbalanced, sample_3layer_info_independent,
                   sample_labels, sample_msbm)
from .powermean import LabelingProblem, dense_power_mean_laplacian, dense_ssl_solve

KINDS = ("grid2x2", "unbalanced", "info3", "lambda-sweep", "timing", "dataset")
WORKERS_ENV = "POWERMEAN_SSL_WORKERS"
DENSE_LIMIT = 3000


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters shared by all experiment kinds; each kind reads the fields it needs.

    ``graphs x label_samples`` runs are made per cell.  The defaults are a
    desk-scale version of the published protocol (10 x 10 runs for the
    two-layer studies, 5 x 5 for the three-layer one).
    """

    kind: str
    p_values: tuple = (-10.0, -1.0, 0.0, 1.0, 10.0)
    lam: float | None = 1.0
    lam_values: tuple = (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0)
    label_fractions: tuple = (0.01, 0.05, 0.10, 0.25, 0.50)
    gaps: tuple = (-0.08, -0.04, 0.0, 0.04, 0.08)
    base_gap: float = 0.08
    prob_sum: float = 0.1
    total_labels: int = 50
    splits: tuple = (1, 5, 10, 15, 20, 25, 30, 35, 40, 45, 49)
    sizes: tuple = (5000, 10000, 20000, 40000)
    timing_p_in: float = 0.05
    timing_p_out: float = 0.025
    timing_base_n: int = 5000
    layer_paths: tuple = ()
    features_paths: tuple = ()
    labels_path: str | None = None
    knn_k: int = 10
    cluster_size: int = 100
    graphs: int = 4
    label_samples: int = 5
    seed: int = 0
    path: str = "auto"
    self_loops: bool = True
    include_expected: bool = True
    record_runtime: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; choose from {KINDS}")
        if self.graphs < 1 or self.label_samples < 1:
            raise ConfigError("repetitions must be at least 1")
        if self.path not in ("auto", "dense", "matrix-free"):
            raise ConfigError("path must be auto, dense or matrix-free")
        if self.lam is not None and not self.lam > 0:
            raise ConfigError("lambda must be positive")
        if any(not v > 0 for v in self.lam_values):
            raise ConfigError("lambda values must be positive")
        for f in self.label_fractions:
            if not 0 < f <= 1:
                raise ConfigError(f"label fraction {f} outside (0, 1]")
        if self.cluster_size < 1:
            raise ConfigError("cluster_size must be positive")
        for name in ("p_values", "lam_values", "label_fractions", "gaps", "splits", "sizes",
                     "layer_paths", "features_paths"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "p_values", tuple(float(p) for p in self.p_values))


@dataclass
class ResultRow:
    coords: dict
    path: str
    errors: tuple = ()
    runtime: float = 0.0
    status: str = "ok"
    extra: dict = field(default_factory=dict)

    @property
    def runs(self):
        return len(self.errors)

    @property
    def mean_error(self):
        return float(np.mean(self.errors)) if self.errors else math.nan

    @property
    def std_error(self):
        return float(np.std(self.errors)) if self.errors else math.nan

    def as_dict(self, record_runtime=False):
        d = dict(self.coords)
        d.update(path=self.path, runs=self.runs, mean_error=self.mean_error,
                 std_error=self.std_error)
        d.update(self.extra)
        if record_runtime:
            d["runtime_s"] = self.runtime
        d["status"] = self.status
        d["errors"] = ";".join(repr(float(e)) for e in self.errors)
        return d


# -- helpers -----------------------------------------------------------------

def worker_count():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        w = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if w < 1:
        raise ConfigError(f"{WORKERS_ENV} must be at least 1")
    return w


def _map_cells(func, tasks):
    tasks = list(tasks)
    workers = min(worker_count(), max(len(tasks), 1))
    if workers <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks))


def is_negative_int(p):
    return math.isfinite(p) and p < 0 and float(p).is_integer()


def choose_path(p, n, requested="auto"):
    """Dense unless matrix-free is requested or needed; matrix-free only for integer p < 0."""
    if not is_negative_int(p) or requested == "dense":
        return "dense"
    if requested == "matrix-free" or n > DENSE_LIMIT:
        return "matrix-free"
    return "dense"


class _Evaluator:
    """Solves one graph for many (p, lambda, labeling) combinations, caching per-p state."""

    def __init__(self, graph, requested_path, self_loops):
        self.graph = graph
        self.requested = requested_path
        self.self_loops = self_loops
        self._dense = {}
        self._mf = {}

    def path_for(self, p):
        return choose_path(p, self.graph.n, self.requested)

    def solve(self, problem):
        p = problem.p
        if self.path_for(p) == "dense":
            if p not in self._dense:
                self._dense[p] = dense_power_mean_laplacian(self.graph, p,
                                                            self_loops=self.self_loops)
            return dense_ssl_solve(self._dense[p], problem)
        cfg = MatrixFreeConfig(p=int(p), lam=problem.lam, self_loops=self.self_loops)
        if p not in self._mf:
            self._mf[p] = MatrixFreeSolver(self.graph, cfg)
        solver = self._mf[p].with_config(cfg)
        return matfree_ssl_solve(self.graph, problem, cfg, solver)


def _seed(*parts):
    return [int(x) for x in parts]


def _mixed_params(k, cluster_size, gaps, prob_sum):
    p_in = tuple((prob_sum + g) / 2 for g in gaps)
    p_out = tuple((prob_sum - g) / 2 for g in gaps)
    return MsbmParams(k, cluster_size, p_in, p_out)


def _budget_or_none(k, cluster_size, fraction):
    count = int(round(fraction * cluster_size))
    if count < 1 or count > cluster_size:
        return None
    return LabelBudget.uniform(k, count)


def _skip_row(coords, reason):
    return ResultRow(coords, "-", (), 0.0, f"skipped: {reason}")


# -- two-layer grid ------------------------------------------------------------

def _grid_cell(task):
    cfg, cell_id, gap2, fraction = task
    params = _mixed_params(2, cfg.cluster_size, (cfg.base_gap, gap2), cfg.prob_sum)
    base = {"gap1": cfg.base_gap, "gap2": gap2, "label_fraction": fraction}
    budget = _budget_or_none(2, cfg.cluster_size, fraction)
    if budget is None:
        return [_skip_row(dict(base, p=p), "infeasible label budget") for p in cfg.p_values]
    return _sbm_runs(cfg, params, cell_id, base, budget, [cfg.lam])


def _sbm_runs(cfg, params, cell_id, base, budget, lams):
    """Errors for every (lam, p) on graphs x label samples of one MSBM cell."""
    truth = params.ground_truth()
    errors, runtime, paths = {}, {}, {}
    for g in range(cfg.graphs):
        ev = _Evaluator(sample_msbm(params, _seed(cfg.seed, cell_id, g)), cfg.path, cfg.self_loops)
        for s in range(cfg.label_samples):
            mask = sample_labels(truth, budget, _seed(cfg.seed, cell_id, g, s, 1))
            for lam in lams:
                for p in cfg.p_values:
                    prob = LabelingProblem.from_labels(truth, mask, lam, p, params.k)
                    _record(ev, prob, (lam, p), errors, runtime, paths)
    rows = []
    for lam in lams:
        for p in cfg.p_values:
            coords = dict(base)
            if cfg.kind == "lambda-sweep":
                coords["lam"] = lam
            coords["p"] = p
            rows.append(_row(coords, (lam, p), errors, runtime, paths))
    return rows


def _record(ev, prob, key, errors, runtime, paths):
    t0 = time.perf_counter()
    res = ev.solve(prob)
    runtime[key] = runtime.get(key, 0.0) + time.perf_counter() - t0
    paths[key] = res.path
    errors.setdefault(key, [])
    if res.test_error is not None:
        errors[key].append(res.test_error)
    return res


def _row(coords, key, errors, runtime, paths):
    errs = tuple(errors[key])
    status = "ok" if errs else "no unlabeled nodes"
    return ResultRow(coords, paths[key], errs, runtime[key], status)


def run_grid2x2(cfg):
    """Layer 1 fixed informative, layer 2 swept from adversarial to informative, times label fractions."""
    tasks = [(cfg, i, g, f) for i, (g, f) in
             enumerate((g, f) for g in cfg.gaps for f in cfg.label_fractions)]
    return [row for rows in _map_cells(_grid_cell, tasks) for row in rows]


# -- unbalanced labels ---------------------------------------------------------

def _unbalanced_cell(task):
    cfg, cell_id, n1 = task
    n2 = cfg.total_labels - n1
    params = _mixed_params(2, cfg.cluster_size, (cfg.base_gap, 0.0), cfg.prob_sum)
    base = {"gap1": cfg.base_gap, "gap2": 0.0, "n1": n1, "n2": n2}
    if not (1 <= n1 <= cfg.cluster_size and 1 <= n2 <= cfg.cluster_size):
        return [_skip_row(dict(base, loss=w, p=p), "infeasible split")
                for w in ("uniform", "weighted") for p in cfg.p_values]
    budget = LabelBudget((n1, n2))
    truth = params.ground_truth()
    errors, paths, runtime = {}, {}, {}
    for g in range(cfg.graphs):
        ev = _Evaluator(sample_msbm(params, _seed(cfg.seed, cell_id, g)), cfg.path, cfg.self_loops)
        for s in range(cfg.label_samples):
            mask = sample_labels(truth, budget, _seed(cfg.seed, cell_id, g, s, 1))
            for loss, wt in (("uniform", "uniform"), ("weighted", "balanced")):
                for p in cfg.p_values:
                    prob = LabelingProblem.from_labels(truth, mask, cfg.lam, p, 2, wt)
                    _record(ev, prob, (loss, p), errors, runtime, paths)
    rows = [_row(dict(base, graph="sampled", loss=loss, p=p), (loss, p), errors, runtime, paths)
            for loss in ("uniform", "weighted") for p in cfg.p_values]
    if cfg.include_expected:
        G = expected_graph(params)
        mask = first_nodes_mask(params, budget)
        ev = _Evaluator(G, "dense", False)
        for loss, wt in (("uniform", "uniform"), ("weighted", "balanced")):
            for p in cfg.p_values:
                res = ev.solve(LabelingProblem.from_labels(truth, mask, cfg.lam, p, 2, wt))
                if loss == "weighted":
                    pred = predict_zero_error(params, p)
                elif cfg.lam == 1.0:
                    pred = predict_zero_error_unbalanced(params, p, n1, n2)
                else:
                    pred = None
                rows.append(ResultRow(dict(base, graph="expected", loss=loss, p=p), res.path,
                                      (res.test_error,), 0.0,
                                      extra={"predicted_zero_error": pred}))
    return rows


def run_unbalanced(cfg):
    """Fixed total of labels split unevenly; uniform versus class-weighted loss."""
    tasks = [(cfg, i, n1) for i, n1 in enumerate(cfg.splits)]
    return [row for rows in _map_cells(_unbalanced_cell, tasks) for row in rows]


# -- information-independent layers -------------------------------------------

def _info3_cell(task):
    cfg, cell_id, gap, fraction = task
    p_in, p_out = (cfg.prob_sum + gap) / 2, (cfg.prob_sum - gap) / 2
    base = {"p_in": p_in, "p_out": p_out, "label_fraction": fraction}
    budget = _budget_or_none(3, cfg.cluster_size, fraction)
    if budget is None:
        return [_skip_row(dict(base, layers=ly, p=p), "infeasible label budget")
                for ly in ("all", "1", "2", "3") for p in cfg.p_values]
    truth = np.repeat(np.arange(3), cfg.cluster_size)
    errors, paths, runtime = {}, {}, {}
    for g in range(cfg.graphs):
        graph = sample_3layer_info_independent(p_in, p_out, cfg.cluster_size,
                                               _seed(cfg.seed, cell_id, g))
        views = {"all": graph}
        for t in range(3):
            views[str(t + 1)] = MultilayerGraph((graph.layers[t],))
        evs = {name: _Evaluator(G, cfg.path, cfg.self_loops) for name, G in views.items()}
        for s in range(cfg.label_samples):
            mask = sample_labels(truth, budget, _seed(cfg.seed, cell_id, g, s, 1))
            for name, ev in evs.items():
                for p in cfg.p_values:
                    prob = LabelingProblem.from_labels(truth, mask, cfg.lam, p, 3)
                    _record(ev, prob, (name, p), errors, runtime, paths)
    return [_row(dict(base, layers=name, p=p), (name, p), errors, runtime, paths)
            for name in ("all", "1", "2", "3") for p in cfg.p_values]


def run_info_independent(cfg):
    """Three layers, each informative about one class only; joint versus single-layer runs."""
    tasks = [(cfg, i, g, f) for i, (g, f) in
             enumerate((g, f) for g in cfg.gaps for f in cfg.label_fractions)]
    return [row for rows in _map_cells(_info3_cell, tasks) for row in rows]


# -- lambda sweep ----------------------------------------------------------------

def _lambda_cell(task):
    cfg, cell_id, fraction = task
    params = _mixed_params(2, cfg.cluster_size, (cfg.base_gap, 0.0), cfg.prob_sum)
    base = {"gap1": cfg.base_gap, "gap2": 0.0, "label_fraction": fraction}
    budget = _budget_or_none(2, cfg.cluster_size, fraction)
    if budget is None:
        return [_skip_row(dict(base, lam=lam, p=p), "infeasible label budget")
                for lam in cfg.lam_values for p in cfg.p_values]
    return _sbm_runs(cfg, params, cell_id, base, budget, list(cfg.lam_values))


def run_lambda_sweep(cfg):
    """Mean error over a range of lambda on the informative-plus-noise two-layer model."""
    tasks = [(cfg, i, f) for i, f in enumerate(cfg.label_fractions)]
    return [row for rows in _map_cells(_lambda_cell, tasks) for row in rows]


# -- timing ------------------------------------------------------------------------

def timing_params(cfg, n):
    """Two classes, two identical-parameter layers; average degree held at its base-size value."""
    if n % 2:
        raise ConfigError(f"timing sizes must be even, got {n}")
    scale = cfg.timing_base_n / n
    return MsbmParams(2, n // 2, (cfg.timing_p_in * scale,) * 2, (cfg.timing_p_out * scale,) * 2)


def run_timing(cfg):
    """Wall time of the matrix-free solve (setup plus all classes) across graph sizes."""
    p = next((p for p in cfg.p_values if is_negative_int(p)), None)
    if p is None:
        raise ConfigError("timing needs a negative integer p")
    lam = cfg.lam if cfg.lam is not None else 1.0
    fraction = cfg.label_fractions[0] if cfg.label_fractions else 0.1
    rows = []
    for i, n in enumerate(cfg.sizes):
        params = timing_params(cfg, n)
        truth = params.ground_truth()
        budget = _budget_or_none(2, params.cluster_size, fraction)
        times, errors, nnz, nodes = [], [], 0, []
        for r in range(cfg.graphs):
            graph = sample_msbm(params, _seed(cfg.seed, i, r))
            nnz = sum(W.nnz for W in graph.layers)
            mask = sample_labels(truth, budget, _seed(cfg.seed, i, r, 1))
            prob = LabelingProblem.from_labels(truth, mask, lam, p, 2)
            mf = MatrixFreeConfig(p=int(p), lam=lam, self_loops=cfg.self_loops)
            t0 = time.perf_counter()
            res = matfree_ssl_solve(graph, prob, mf)
            times.append(time.perf_counter() - t0)
            errors.append(res.test_error)
            nodes.append(res.info["N"])
        rows.append(ResultRow({"n": n, "p": p, "lam": lam}, "matrix-free", tuple(errors),
                              float(np.mean(times)),
                              extra={"nnz": nnz, "mean_time_s": float(np.mean(times)),
                                     "contour_points": max(nodes)}))
    return rows


# -- datasets -------------------------------------------------------------------------

def dataset_lambda(p, lam=None):
    """Default lambda for dataset runs: 0.1 for p > 0, 10 otherwise (unless fixed)."""
    if lam is not None:
        return lam
    return 0.1 if p > 0 else 10.0


def run_dataset(cfg):
    """Labels sampled per class at each fraction; kNN layers built from feature files."""
    if cfg.labels_path is None:
        raise ConfigError("dataset runs need a labels file")
    graph, truth = load_multilayer(cfg.layer_paths, cfg.labels_path, cfg.features_paths,
                                   cfg.knn_k)
    k = int(truth.max()) + 1
    sizes = np.bincount(truth, minlength=k)
    ev = _Evaluator(graph, cfg.path, cfg.self_loops)
    rows = []
    for i, fraction in enumerate(cfg.label_fractions):
        counts = tuple(max(1, int(round(fraction * s))) for s in sizes)
        for p in cfg.p_values:
            lam = dataset_lambda(p, cfg.lam)
            coords = {"label_fraction": fraction, "p": p, "lam": lam}
            errs, path, t_total = [], ev.path_for(p), 0.0
            status = "ok"
            for s in range(cfg.label_samples):
                mask = sample_labels(truth, LabelBudget(counts), _seed(cfg.seed, i, s))
                prob = LabelingProblem.from_labels(truth, mask, lam, p, k)
                t0 = time.perf_counter()
                res = ev.solve(prob)
                t_total += time.perf_counter() - t0
                if res.test_error is None:
                    status = "no unlabeled nodes"
                    continue
                errs.append(res.test_error)
            rows.append(ResultRow(coords, path, tuple(errs), t_total, status))
    return rows


RUNNERS = {
    "grid2x2": run_grid2x2,
    "unbalanced": run_unbalanced,
    "info3": run_info_independent,
    "lambda-sweep": run_lambda_sweep,
    "timing": run_timing,
    "dataset": run_dataset,
}


def run_experiment(cfg):
    return RUNNERS[cfg.kind](cfg)


# -- output ------------------------------------------------------------------------------

def rows_to_dicts(rows, record_runtime=False):
    return [r.as_dict(record_runtime) for r in rows]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def write_results(rows, out, cfg):
    """Write ``out`` (CSV) and ``out.json`` (config, version, seed, runtimes)."""
    record = cfg.record_runtime or cfg.kind == "timing"
    dicts = rows_to_dicts(rows, record)
    header = []
    for d in dicts:
        for key in d:
            if key not in header:
                header.append(key)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for d in dicts:
            w.writerow([_fmt(d.get(h)) for h in header])
    sidecar = {
        "config": asdict(cfg),
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "seed": cfg.seed,
        "rows": len(rows),
        "runtimes_s": [r.runtime for r in rows],
    }
    Path(str(out) + ".json").write_text(json.dumps(sidecar, indent=2, default=str) + "\n")
    return out


def read_results(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
