"""Supervised aggregators over the per-scorer curvature features."""
from .common import (
    AGG_FORMAT,
    TrainedAggregator,
    load_aggregator,
    predict_proba,
    save_aggregator,
)
from .forest import fit_random_forest
from .grid import DEFAULT_GRIDS, HyperGrid, fit_method, grid_search, stratified_folds
from .logistic import fit_logistic
from .naive_bayes import fit_gnb
from .svm import SvmConvergenceError, fit_svm

__all__ = [
    "AGG_FORMAT",
    "DEFAULT_GRIDS",
    "HyperGrid",
    "SvmConvergenceError",
    "TrainedAggregator",
    "fit_gnb",
    "fit_logistic",
    "fit_method",
    "fit_random_forest",
    "fit_svm",
    "grid_search",
    "load_aggregator",
    "predict_proba",
    "save_aggregator",
    "stratified_folds",
]
