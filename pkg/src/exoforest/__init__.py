"""Random forests with exogenous randomness: CART processes, MSE expansions and simulation."""

from .cart_process import (
    BinaryState,
    UniformState,
    process_distribution,
    sample_binary_process,
    sample_uniform_process,
    subsample_avoid_prob,
    terminal_cell_binary,
    terminal_cell_uniform,
    w_function,
)
from .model import Dataset, FeatureKind, ModelSpec, generate_dataset, named_config, regression_mean
from .theory import (
    MseBreakdown,
    PerfMeasures,
    binary_mse_terms,
    convergence_bound,
    cross_tree_correlation,
    perf_measures,
    uniform_mse_terms,
)

__all__ = [
    "BinaryState", "UniformState", "process_distribution", "sample_binary_process",
    "sample_uniform_process", "subsample_avoid_prob", "terminal_cell_binary",
    "terminal_cell_uniform", "w_function", "Dataset", "FeatureKind", "ModelSpec",
    "generate_dataset", "named_config", "regression_mean", "MseBreakdown", "PerfMeasures",
    "binary_mse_terms", "convergence_bound", "cross_tree_correlation", "perf_measures",
    "uniform_mse_terms",
]

__version__ = "0.1.0"
