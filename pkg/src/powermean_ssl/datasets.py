"""The bundled synthetic two-view dataset and its generator.

Three classes of 100 nodes each.  View ``a`` separates class 1 from the
other two, which it blurs together; view ``b`` separates class 3 and blurs
classes 1 and 2.  Neither view resolves all three classes alone.
"""

from __future__ import annotations

import csv
from importlib import resources
from pathlib import Path

import numpy as np

from .graph import write_labels
from .msbm import make_rng

FIXTURE_SEED = 20240
CLASS_SIZE = 100
N_CLASSES = 3
DIM = 8


def _view(rng, truth, centers, noise):
    return centers[truth] + noise * rng.standard_normal((len(truth), centers.shape[1]))


def make_synthetic_views(class_size=CLASS_SIZE, seed=FIXTURE_SEED, dim=DIM, noise=0.8):
    """Return ``(view_a, view_b, truth)`` with 0-based ``truth``."""
    rng = make_rng(seed)
    truth = np.repeat(np.arange(N_CLASSES), class_size)
    e = np.eye(dim)
    # class centers per view; the blurred pair differs by a small offset
    a = np.stack([3.0 * e[0], 1.2 * e[1], -1.2 * e[1]])
    b = np.stack([1.2 * e[2], -1.2 * e[2], 3.0 * e[3]])
    Xa = _view(rng, truth, a, noise)
    Xb = _view(rng, truth, b, noise)
    return Xa, Xb, truth


def write_features(path, X):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j}" for j in range(X.shape[1])])
        for row in X:
            w.writerow([repr(float(v)) for v in row])


def write_synthetic_dataset(directory, **kwargs):
    """Write ``view_a.csv``, ``view_b.csv`` and ``labels.csv`` into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    Xa, Xb, truth = make_synthetic_views(**kwargs)
    write_features(d / "view_a.csv", Xa)
    write_features(d / "view_b.csv", Xb)
    write_labels(d / "labels.csv", truth)
    return d


def bundled_dataset():
    """Paths ``(view_a, view_b, labels)`` of the copy shipped with the package."""
    root = resources.files("powermean_ssl") / "data"
    return tuple(Path(str(root / name)) for name in ("view_a.csv", "view_b.csv", "labels.csv"))
