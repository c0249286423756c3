"""Semi-supervised learning on multilayer graphs with the power mean Laplacian."""

__version__ = "0.1.0"

from .errors import (ConfigError, DegreeError, DomainError, FactorizationError, InputError,
                     NumericalError, PowerMeanError, ScopeError)
from .graph import (MultilayerGraph, ShiftedLaplacian, knn_graph, load_multilayer,
                    normalized_laplacian, shift_for_p)
from .matfree import MatrixFreeConfig, MatrixFreeSolver, matfree_ssl_solve
from .msbm import (LabelBudget, MsbmParams, expected_graph, predict_zero_error, sample_labels,
                   sample_msbm)
from .powermean import (LabelingProblem, LabelingResult, assign_labels, dense_power_mean_laplacian,
                        dense_ssl_solve, scalar_power_mean)
from .sparse import SparseMatrix, csr_from_triplets, read_mtx, write_mtx

__all__ = [
    "ConfigError", "DegreeError", "DomainError", "FactorizationError", "InputError",
    "NumericalError", "PowerMeanError", "ScopeError",
    "MultilayerGraph", "ShiftedLaplacian", "knn_graph", "load_multilayer",
    "normalized_laplacian", "shift_for_p",
    "MatrixFreeConfig", "MatrixFreeSolver", "matfree_ssl_solve",
    "LabelBudget", "MsbmParams", "expected_graph", "predict_zero_error", "sample_labels",
    "sample_msbm",
    "LabelingProblem", "LabelingResult", "assign_labels", "dense_power_mean_laplacian",
    "dense_ssl_solve", "scalar_power_mean",
    "SparseMatrix", "csr_from_triplets", "read_mtx", "write_mtx",
]
