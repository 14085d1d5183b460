"""Random forest of CART trees split on Gini impurity."""
from __future__ import annotations

import math

import numpy as np

from .common import (
    TrainedAggregator,
    check_features,
    check_labels,
    default_feature_names,
    register_predictor,
)
from ..rng import derive_rng


def _gini(n0, n1):
    n = n0 + n1
    if n == 0:
        return 0.0
    p1 = n1 / n
    return 2.0 * p1 * (1.0 - p1)


def _best_split(X, y, rows, feats):
    """Lowest weighted child Gini over midpoint thresholds of the candidate
    features; ties go to the lower feature index, then the lower threshold."""
    best = None  # (score, feature, threshold)
    n = len(rows)
    for j in sorted(feats):
        values = X[rows, j]
        order = np.argsort(values, kind="stable")
        sv = values[order]
        sy = y[rows][order]
        ones = np.cumsum(sy)
        distinct = np.nonzero(sv[1:] > sv[:-1])[0]  # split after position i
        for i in distinct:
            nl = i + 1
            nr = n - nl
            left1 = int(ones[i])
            right1 = int(ones[-1]) - left1
            score = (nl * _gini(nl - left1, left1) + nr * _gini(nr - right1, right1)) / n
            threshold = (sv[i] + sv[i + 1]) / 2.0
            if best is None or score < best[0] or (
                score == best[0] and (j, threshold) < (best[1], best[2])
            ):
                best = (score, j, threshold)
    return best


def _grow(X, y, rows, depth, max_depth, min_samples_split, rng, n_subset):
    n1 = int(y[rows].sum())
    n = len(rows)
    if n1 in (0, n) or n < min_samples_split or (max_depth is not None and depth >= max_depth):
        return {"leaf": [(n - n1) / n, n1 / n]}
    m = X.shape[1]
    feats = sorted(int(f) for f in rng.choice(m, size=n_subset, replace=False))
    best = _best_split(X, y, rows, feats)
    if best is None and n_subset < m:
        # candidate subset was constant on this node; widen to all features
        best = _best_split(X, y, rows, range(m))
    if best is None:
        return {"leaf": [(n - n1) / n, n1 / n]}
    _, j, threshold = best
    mask = X[rows, j] <= threshold
    left = rows[mask]
    right = rows[~mask]
    return {
        "feature": int(j),
        "threshold": float(threshold),
        "left": _grow(X, y, left, depth + 1, max_depth, min_samples_split, rng, n_subset),
        "right": _grow(X, y, right, depth + 1, max_depth, min_samples_split, rng, n_subset),
    }


def fit_random_forest(X, y, n_estimators: int = 100, max_depth=None,
                      min_samples_split: int = 2, bootstrap: bool = True,
                      seed: int = 0, feature_names=None) -> TrainedAggregator:
    """Fully deterministic forest: tree t draws its bootstrap rows and per-node
    feature subsets from a stream derived from (seed, t)."""
    if n_estimators < 1:
        raise ValueError(f"n_estimators must be >= 1, got {n_estimators}")
    if min_samples_split < 2:
        raise ValueError(f"min_samples_split must be >= 2, got {min_samples_split}")
    X = check_features(X)
    y = check_labels(y)
    n, m = X.shape
    n_subset = max(1, math.isqrt(m) + (0 if math.isqrt(m) ** 2 == m else 1))
    trees = []
    for t in range(n_estimators):
        rng = derive_rng(seed, "tree", t)
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(_grow(X, y, np.asarray(rows), 0, max_depth,
                           min_samples_split, rng, n_subset))
    if feature_names is None:
        feature_names = default_feature_names(m)
    return TrainedAggregator(
        method="rf",
        feature_names=list(feature_names),
        parameters={"trees": trees},
        hyperparameters={
            "n_estimators": n_estimators,
            "max_depth": max_depth,
            "min_samples_split": min_samples_split,
            "bootstrap": bootstrap,
            "seed": seed,
        },
    )


def _tree_prob(tree, x):
    node = tree
    while "leaf" not in node:
        node = node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]
    return node["leaf"][1]


@register_predictor("rf")
def _predict_rf(model, X):
    trees = model.parameters["trees"]
    X = np.asarray(X, dtype=float)
    return np.array([
        sum(_tree_prob(tree, x) for tree in trees) / len(trees) for x in X
    ])
