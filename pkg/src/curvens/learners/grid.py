"""Exhaustive grid search with stratified k-fold cross-validated AUROC."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ..evaluation import LabeledScores, auroc
from ..rng import derive_rng, derive_seed
from .common import TrainedAggregator, check_features, check_labels, predict_proba
from .forest import fit_random_forest
from .logistic import fit_logistic
from .naive_bayes import fit_gnb
from .svm import fit_svm

LEGAL_AXES = {
    "lr": ("C", "penalty"),
    "rf": ("bootstrap", "max_depth", "min_samples_split", "n_estimators"),
    "gnb": ("var_smoothing",),
    "svm": ("C", "gamma", "kernel"),
}

DEFAULT_GRIDS = {
    "lr": {"C": [0.01, 0.1, 1.0, 10.0, 100.0], "penalty": ["l2", "none"]},
    "rf": {
        "n_estimators": [50, 100, 200],
        "max_depth": [None, 4, 8, 16],
        "min_samples_split": [2, 5, 10],
        "bootstrap": [True, False],
    },
    "gnb": {"var_smoothing": [1e-12, 1e-9, 1e-6]},
    "svm": {
        "C": [0.01, 0.1, 1.0, 10.0, 100.0],
        "gamma": ["scale", 0.01, 0.1, 1.0],
        "kernel": ["linear", "rbf"],
    },
}


@dataclass(frozen=True)
class HyperGrid:
    method: str
    axes: dict = field(default_factory=dict)

    def __post_init__(self):
        legal = LEGAL_AXES.get(self.method)
        if legal is None:
            raise ValueError(f"unknown method for grid search: {self.method!r}")
        for name in self.axes:
            if name not in legal:
                raise ValueError(
                    f"illegal hyperparameter {name!r} for {self.method}; legal: {legal}"
                )
        if not self.axes or any(len(v) == 0 for v in self.axes.values()):
            raise ValueError("grid must have at least one point on every axis")

    def points(self):
        """Cartesian product in axis insertion order; defines the tie-break order."""
        names = list(self.axes)
        for combo in product(*(self.axes[n] for n in names)):
            yield dict(zip(names, combo))


def fit_method(method, X, y, params=None, seed=0, feature_names=None) -> TrainedAggregator:
    """Dispatch to the right fitter; only the forest consumes the seed."""
    params = dict(params or {})
    if method == "lr":
        return fit_logistic(X, y, feature_names=feature_names, **params)
    if method == "gnb":
        return fit_gnb(X, y, feature_names=feature_names, **params)
    if method == "rf":
        return fit_random_forest(X, y, seed=seed, feature_names=feature_names, **params)
    if method == "svm":
        return fit_svm(X, y, feature_names=feature_names, **params)
    raise ValueError(f"unknown aggregator method: {method!r}")


def stratified_folds(y, folds, seed):
    """Deterministic stratified k-fold assignment; yields (train_idx, test_idx)."""
    y = np.asarray(y)
    if folds < 2:
        raise ValueError(f"need >= 2 folds, got {folds}")
    counts = {c: int((y == c).sum()) for c in np.unique(y)}
    smallest = min(counts.values())
    if folds > smallest:
        raise ValueError(
            f"{folds} folds exceed the minority class size {smallest}"
        )
    assignment = np.empty(len(y), dtype=int)
    for c in counts:
        idx = np.flatnonzero(y == c)
        idx = idx[derive_rng(seed, "folds", int(c)).permutation(len(idx))]
        for pos, row in enumerate(idx):
            assignment[row] = pos % folds
    for f in range(folds):
        test = np.flatnonzero(assignment == f)
        train = np.flatnonzero(assignment != f)
        yield train, test


def cv_auroc(method, params, X, y, folds, seed) -> float:
    X = check_features(X)
    y = check_labels(y)
    scores = []
    for f, (train, test) in enumerate(stratified_folds(y, folds, seed)):
        model = fit_method(method, X[train], y[train], params,
                           seed=derive_seed(seed, "fit", f))
        p = predict_proba(model, X[test])
        scores.append(auroc(LabeledScores(
            human_scores=tuple(p[y[test] == 0]),
            machine_scores=tuple(p[y[test] == 1]),
        )))
    return float(np.mean(scores))


def grid_search(method, grid: HyperGrid, X, y, folds: int, seed: int = 0):
    """Best hyperparameters by CV AUROC; ties keep the first point in grid order."""
    if grid.method != method:
        raise ValueError(f"grid is for {grid.method!r}, not {method!r}")
    best_params, best_score = None, -np.inf
    for params in grid.points():
        score = cv_auroc(method, params, X, y, folds, seed)
        if score > best_score:
            best_params, best_score = params, score
    return best_params, best_score
