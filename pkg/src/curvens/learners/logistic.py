"""Binary logistic regression fit by full-batch Newton iterations."""
from __future__ import annotations

import numpy as np

from .common import (
    TrainedAggregator,
    apply_standardizer,
    check_features,
    check_labels,
    default_feature_names,
    fit_standardizer,
    register_predictor,
)

GRAD_TOL = 1e-8
MAX_ITER = 100


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def loss_and_grad(theta, Xb, y, reg):
    """Penalized negative log-likelihood and its gradient.

    theta = [w..., b]; the intercept (last entry) is never regularized.
    loss = (reg/2)||w||^2 + sum log(1 + exp(-yt * (Xb @ theta))), yt in {-1,+1}.
    """
    margins = Xb @ theta
    yt = 2.0 * y - 1.0
    loss = float(np.logaddexp(0.0, -yt * margins).sum())
    loss += 0.5 * reg * float(theta[:-1] @ theta[:-1])
    p = sigmoid(margins)
    grad = Xb.T @ (p - y)
    grad[:-1] += reg * theta[:-1]
    return loss, grad


def _hessian(theta, Xb, reg):
    p = sigmoid(Xb @ theta)
    w = p * (1.0 - p)
    H = Xb.T @ (Xb * w[:, None])
    H[np.arange(len(theta) - 1), np.arange(len(theta) - 1)] += reg
    # tiny ridge keeps the solve well-posed when the sigmoid saturates
    H[np.diag_indices_from(H)] += 1e-10
    return H


def fit_logistic(X, y, C: float = 1.0, penalty: str = "l2",
                 feature_names=None) -> TrainedAggregator:
    """Newton optimization to gradient norm <= 1e-8 (capped at 100 iterations)."""
    if C <= 0:
        raise ValueError(f"C must be > 0, got {C}")
    if penalty not in ("l2", "none"):
        raise ValueError(f"penalty must be 'l2' or 'none', got {penalty!r}")
    X = check_features(X)
    y = check_labels(y)
    stats = fit_standardizer(X)
    Xs = apply_standardizer(X, stats)
    Xb = np.hstack([Xs, np.ones((len(Xs), 1))])
    reg = 1.0 / C if penalty == "l2" else 0.0

    theta = np.zeros(Xb.shape[1])
    loss, grad = loss_and_grad(theta, Xb, y, reg)
    for _ in range(MAX_ITER):
        if np.linalg.norm(grad) <= GRAD_TOL:
            break
        step = np.linalg.solve(_hessian(theta, Xb, reg), grad)
        t = 1.0
        for _ in range(50):
            candidate = theta - t * step
            new_loss, new_grad = loss_and_grad(candidate, Xb, y, reg)
            if new_loss <= loss:
                theta, loss, grad = candidate, new_loss, new_grad
                break
            t *= 0.5
        else:
            break  # no descent direction left; accept current point

    if feature_names is None:
        feature_names = default_feature_names(X.shape[1])
    return TrainedAggregator(
        method="lr",
        feature_names=list(feature_names),
        parameters={"weights": theta[:-1].tolist(), "intercept": float(theta[-1])},
        hyperparameters={"C": C, "penalty": penalty},
        train_stats=stats,
    )


@register_predictor("lr")
def _predict_lr(model, X):
    w = np.asarray(model.parameters["weights"])
    b = model.parameters["intercept"]
    return sigmoid(X @ w + b)
