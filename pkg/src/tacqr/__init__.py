"""Tail-allocation conformalized quantile regression.

Per-point allocation of the miscoverage budget between the two tails,
chosen from fitted quantiles and calibrated by split conformal inference,
with exact population oracles for known conditional laws.
"""
from .allocation import AllocationGrid, CoreSelection, build_grid, core_length, select_allocation
from .conformal import (
    METHODS,
    CalibratedPredictor,
    PredictionInterval,
    calibrate,
    conformal_quantile,
    conformal_rank,
    predict_interval,
    predict_intervals,
    score_two_sided,
)
from .config import ExperimentConfig, load_config
from .data import Dataset, SplitIndices, load_csv, split_dataset
from .dgp import DgpSpec, build_custom_mixture, conditional_law, sample
from .oracle import (
    brute_force_shortest_interval,
    check_balanced_density,
    hdr,
    oracle_allocation,
    oracle_quantile,
    truncation_cost,
)
from .quantiles import (
    QuantileLevelSet,
    fit_knn,
    fit_linear_pinball,
    predict_levels,
    rearrange_monotone,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationGrid", "CoreSelection", "build_grid", "core_length", "select_allocation",
    "METHODS", "CalibratedPredictor", "PredictionInterval", "calibrate", "conformal_quantile",
    "conformal_rank", "predict_interval", "predict_intervals", "score_two_sided",
    "ExperimentConfig", "load_config", "Dataset", "SplitIndices", "load_csv", "split_dataset",
    "DgpSpec", "build_custom_mixture", "conditional_law", "sample",
    "brute_force_shortest_interval", "check_balanced_density", "hdr", "oracle_allocation",
    "oracle_quantile", "truncation_cost", "QuantileLevelSet", "fit_knn", "fit_linear_pinball",
    "predict_levels", "rearrange_monotone",
]
