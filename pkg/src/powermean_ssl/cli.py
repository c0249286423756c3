"""Command-line interface: ``powermean-ssl <subcommand> [options]``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, InputError, NumericalError, PowerMeanError
from .experiments import (ExperimentConfig, choose_path, dataset_lambda, run_experiment,
                          write_results)
from .graph import load_multilayer
from .matfree import MatrixFreeConfig, matfree_ssl_solve
from .powermean import LabelingProblem, dense_power_mean_laplacian, dense_ssl_solve, test_error

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
SUBCOMMANDS = {
    "grid2x2": "grid2x2",
    "unbalanced": "unbalanced",
    "info3": "info3",
    "lambda-sweep": "lambda-sweep",
    "timing": "timing",
    "dataset": "dataset",
}

log = logging.getLogger("powermean_ssl")


def _parse_p(text):
    t = text.strip().lower()
    if t in ("inf", "+inf"):
        return math.inf
    if t == "-inf":
        return -math.inf
    try:
        return float(t)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid p value {text!r}") from exc


def _common(parser, defaults):
    parser.add_argument("--p", dest="p_values", type=_parse_p, action="append",
                        help="power (repeatable); default " + ", ".join(map(str, defaults)))
    parser.add_argument("--lambda", dest="lam", type=float, help="regularization strength")
    parser.add_argument("--labels", dest="labels", type=float, action="append",
                        help="labeled fraction per class, e.g. 0.1 (repeatable)")
    parser.add_argument("--reps", type=int, nargs=2, metavar=("GRAPHS", "LABEL_SAMPLES"),
                        help="random graphs and label samples per cell")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, required=True, help="CSV output path")
    path = parser.add_mutually_exclusive_group()
    path.add_argument("--matrix-free", dest="path", action="store_const", const="matrix-free")
    path.add_argument("--dense", dest="path", action="store_const", const="dense")
    parser.add_argument("--self-loops", dest="self_loops", action="store_true", default=None,
                        help="give isolated nodes a unit self-loop instead of failing")
    parser.add_argument("--no-self-loops", dest="self_loops", action="store_false")
    parser.add_argument("--record-runtime", action="store_true",
                        help="add a runtime column (breaks byte-identical reruns)")


def build_parser():
    parser = argparse.ArgumentParser(prog="powermean-ssl",
                                     description="Semi-supervised learning on multilayer graphs "
                                                 "with the power mean Laplacian.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grid2x2", help="two layers: layer-2 informativeness x label fraction")
    _common(p, (-10, -1, 0, 1, 10))
    p.add_argument("--gaps", type=float, nargs="*", help="layer-2 p_in - p_out values")
    p.add_argument("--cluster-size", type=int)

    p = sub.add_parser("unbalanced", help="uneven label splits, uniform vs weighted loss")
    _common(p, (-10, -1, 0, 1, 10))
    p.add_argument("--total", type=int, help="total labeled nodes n1 + n2")
    p.add_argument("--splits", type=int, nargs="*", help="values of n1")
    p.add_argument("--cluster-size", type=int)

    p = sub.add_parser("info3", help="three layers, each informative about one class")
    _common(p, (-10, -1, 0, 1, 10))
    p.add_argument("--gaps", type=float, nargs="*", help="p_in - p_out values")
    p.add_argument("--cluster-size", type=int)

    p = sub.add_parser("lambda-sweep", help="error versus lambda")
    _common(p, (-1, -2, -5, -10))
    p.add_argument("--lambdas", type=float, nargs="*")
    p.add_argument("--cluster-size", type=int)

    p = sub.add_parser("timing", help="matrix-free wall time across graph sizes")
    _common(p, (-1,))
    p.add_argument("--sizes", type=int, nargs="*")

    p = sub.add_parser("dataset", help="layers and/or feature views from files")
    _common(p, (1, -1, -10))
    _files(p)
    p.add_argument("--knn", type=int, default=10, help="neighbours per node for feature layers")

    p = sub.add_parser("solve", help="one-shot SSL on user files")
    _files(p)
    p.add_argument("--knn", type=int, default=10)
    p.add_argument("--p", dest="p", type=_parse_p, default=-1.0)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--truth", type=Path, help="full node_id,class file to score predictions")
    p.add_argument("--out", type=Path, required=True, help="predictions CSV (node_id,class)")
    path = p.add_mutually_exclusive_group()
    path.add_argument("--matrix-free", dest="path", action="store_const", const="matrix-free")
    path.add_argument("--dense", dest="path", action="store_const", const="dense")
    p.add_argument("--self-loops", action="store_true")
    return parser


def _files(p):
    p.add_argument("--layer", dest="layer_paths", type=Path, action="append", default=[],
                   help="Matrix Market adjacency layer (repeatable)")
    p.add_argument("--features", dest="features_paths", type=Path, action="append", default=[],
                   help="feature CSV, one row per node (repeatable)")
    p.add_argument("--label-file", dest="labels_path", type=Path, required=True,
                   help="node_id,class CSV (classes 1..k)")


def _config_from_args(args):
    kind = SUBCOMMANDS[args.command]
    kw = {"kind": kind, "seed": args.seed}
    if args.p_values:
        kw["p_values"] = tuple(args.p_values)
    elif kind == "lambda-sweep":
        kw["p_values"] = (-1.0, -2.0, -5.0, -10.0)
    elif kind == "timing":
        kw["p_values"] = (-1.0,)
    elif kind == "dataset":
        kw["p_values"] = (1.0, -1.0, -10.0)
    if args.lam is not None:
        kw["lam"] = args.lam
    elif kind == "dataset":
        kw["lam"] = None
    if args.labels:
        kw["label_fractions"] = tuple(args.labels)
    elif kind == "unbalanced":
        kw["label_fractions"] = ()
    elif kind == "info3":
        kw["label_fractions"] = (0.05, 0.10, 0.20)
    elif kind == "lambda-sweep":
        kw["label_fractions"] = (0.01, 0.05, 0.10, 0.25, 0.50)
    elif kind == "timing":
        kw["label_fractions"] = (0.10,)
    elif kind == "dataset":
        kw["label_fractions"] = (0.01, 0.05, 0.10, 0.15, 0.20, 0.25)
    if args.reps:
        kw["graphs"], kw["label_samples"] = args.reps
    elif kind == "timing":
        kw["graphs"], kw["label_samples"] = 1, 1
    elif kind == "dataset":
        kw["graphs"], kw["label_samples"] = 1, 10
    if args.path:
        kw["path"] = args.path
    if args.self_loops is not None:
        kw["self_loops"] = args.self_loops
    elif kind == "dataset":
        kw["self_loops"] = False
    kw["record_runtime"] = args.record_runtime
    if getattr(args, "gaps", None) is not None:
        kw["gaps"] = tuple(args.gaps)
    elif kind == "info3":
        kw["gaps"] = (0.03, 0.05, 0.07, 0.10)
    if getattr(args, "cluster_size", None):
        kw["cluster_size"] = args.cluster_size
    if getattr(args, "total", None):
        kw["total_labels"] = args.total
    if getattr(args, "splits", None) is not None:
        kw["splits"] = tuple(args.splits)
    if getattr(args, "lambdas", None) is not None:
        kw["lam_values"] = tuple(args.lambdas)
    if getattr(args, "sizes", None) is not None:
        kw["sizes"] = tuple(args.sizes)
    if kind == "dataset":
        kw.update(layer_paths=tuple(map(str, args.layer_paths)),
                  features_paths=tuple(map(str, args.features_paths)),
                  labels_path=str(args.labels_path), knn_k=args.knn)
    return ExperimentConfig(**kw)


def read_partial_labels(path, n):
    """``node_id,class`` rows for a subset of nodes; returns (mask, 0-based classes)."""
    rows = []
    try:
        with Path(path).open(newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or not any(c.strip() for c in rec):
                    continue
                try:
                    rows.append((int(rec[0]), int(rec[1])))
                except (ValueError, IndexError):
                    if rows:
                        raise InputError(f"{path}: bad row {rec!r}") from None
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    if not rows:
        raise InputError(f"{path}: no labels")
    ids = np.array([r[0] for r in rows])
    cls = np.array([r[1] for r in rows])
    if ids.min() < 0 or ids.max() >= n or len(set(ids.tolist())) != len(ids):
        raise InputError(f"{path}: node ids must be distinct and within 0..{n - 1}")
    if cls.min() < 1:
        raise InputError(f"{path}: unknown class id {cls.min()}")
    mask = np.zeros(n, dtype=bool)
    mask[ids] = True
    labels = np.zeros(n, dtype=np.int64)
    labels[ids] = cls - 1
    return mask, labels


def run_solve(args):
    graph, _ = load_multilayer(args.layer_paths, None, args.features_paths, args.knn)
    mask, labels = read_partial_labels(args.labels_path, graph.n)
    k = int(labels[mask].max()) + 1
    truth = None
    if args.truth is not None:
        from .graph import read_labels
        truth = read_labels(args.truth, graph.n)
        k = max(k, int(truth.max()) + 1)
        if np.any(truth[mask] != labels[mask]):
            raise InputError("labels disagree with the truth file")
    Y = np.zeros((graph.n, k))
    Y[np.flatnonzero(mask), labels[mask]] = 1.0
    lam = dataset_lambda(args.p, args.lam)
    problem = LabelingProblem(Y, mask, lam, args.p, None, truth)
    path = choose_path(args.p, graph.n, args.path or "auto")
    if path == "dense":
        L = dense_power_mean_laplacian(graph, args.p, self_loops=args.self_loops)
        result = dense_ssl_solve(L, problem)
    else:
        cfg = MatrixFreeConfig(p=int(args.p), lam=lam, self_loops=args.self_loops)
        result = matfree_ssl_solve(graph, problem, cfg)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with args.out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "class"])
        for i, c in enumerate(result.predicted_labels.tolist()):
            w.writerow([i, c + 1])
    msg = f"wrote {graph.n} predictions to {args.out} (path={path}, p={args.p:g}, lambda={lam:g})"
    if truth is not None and (~mask).any():
        msg += f"; test error {test_error(result.predicted_labels, truth, mask):.4f}"
    print(msg)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve":
            run_solve(args)
            return EXIT_OK
        cfg = _config_from_args(args)
        rows = run_experiment(cfg)
        write_results(rows, args.out, cfg)
        print(f"wrote {len(rows)} rows to {args.out}")
        return EXIT_OK
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, InputError, PowerMeanError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
