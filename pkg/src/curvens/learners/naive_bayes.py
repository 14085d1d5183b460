"""Gaussian Naive Bayes with variance smoothing."""
from __future__ import annotations

import numpy as np

from .common import (
    TrainedAggregator,
    check_features,
    check_labels,
    default_feature_names,
    register_predictor,
)


def fit_gnb(X, y, var_smoothing: float = 1e-9, feature_names=None) -> TrainedAggregator:
    """Per-class feature means/variances; variances floored by
    var_smoothing times the largest overall feature variance."""
    if var_smoothing < 0:
        raise ValueError(f"var_smoothing must be >= 0, got {var_smoothing}")
    X = check_features(X)
    y = check_labels(y)
    epsilon = var_smoothing * float(X.var(axis=0).max())
    means, variances, priors = [], [], []
    for c in (0, 1):
        rows = X[y == c]
        priors.append(len(rows) / len(X))
        means.append(rows.mean(axis=0))
        variances.append(rows.var(axis=0) + epsilon)
    variances = np.asarray(variances)
    if np.any(variances == 0.0):
        raise ValueError("singular variance: a class feature has zero variance "
                         "and var_smoothing does not lift it")
    if feature_names is None:
        feature_names = default_feature_names(X.shape[1])
    return TrainedAggregator(
        method="gnb",
        feature_names=list(feature_names),
        parameters={
            "priors": priors,
            "means": [m.tolist() for m in means],
            "variances": [v.tolist() for v in variances],
        },
        hyperparameters={"var_smoothing": var_smoothing},
    )


def class_log_likelihood(model, X) -> np.ndarray:
    """Joint log-likelihood log P(class) + sum_j log N(x_j; mu, sigma^2), per class."""
    X = np.asarray(X, dtype=float)
    out = np.empty((len(X), 2))
    for c in (0, 1):
        mu = np.asarray(model.parameters["means"][c])
        var = np.asarray(model.parameters["variances"][c])
        log_density = -0.5 * (np.log(2.0 * np.pi * var) + (X - mu) ** 2 / var)
        out[:, c] = np.log(model.parameters["priors"][c]) + log_density.sum(axis=1)
    return out

@register_predictor("gnb")
def _predict_gnb(model, X):
    ll = class_log_likelihood(model, X)
    # two-class softmax; the complementary probability is exactly 1 - p
    from .logistic import sigmoid

    return sigmoid(ll[:, 1] - ll[:, 0])
