"""Soft-margin SVM solved by sequential minimal optimization, with Platt-scaled
probability outputs."""
from __future__ import annotations

import math

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

KKT_TOL = 1e-3
MAX_ITER = 200_000


class SvmConvergenceError(RuntimeError):
    pass


def _kernel_matrix(A, B, kernel, gamma):
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise ValueError(f"kernel must be 'linear' or 'rbf', got {kernel!r}")


def _resolve_gamma(gamma, X):
    if gamma == "scale":
        var = float(X.var())
        return 1.0 / (X.shape[1] * var) if var > 0 else 1.0
    gamma = float(gamma)
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    return gamma


def _smo(K, yt, C, tol=KKT_TOL, max_iter=MAX_ITER):
    """Sequential minimal optimization with maximal-violating-pair selection.

    Each step optimizes the pair (i, j) with i = argmin F over the
    ascent-feasible set and j = argmax F over the descent-feasible set,
    where F_k = u_k - y_k and u is the margin without the intercept; the
    intercept cancels in every pair update, so optimality is checked by the
    bracket gap max(F_low) - min(F_up) <= tol. Deterministic: ties go to
    the lowest index.
    """
    n = len(yt)
    alphas = np.zeros(n)
    u = np.zeros(n)  # decision values without the intercept
    gap = np.inf
    snap = 1e-12 * max(1.0, C)  # keep near-bound alphas exactly on the bound

    def snapped(a):
        if a < snap:
            return 0.0
        if a > C - snap:
            return C
        return a

    for _ in range(max_iter):
        F = u - yt
        up = ((yt > 0) & (alphas < C)) | ((yt < 0) & (alphas > 0))
        low = ((yt > 0) & (alphas > 0)) | ((yt < 0) & (alphas < C))
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.argmin(np.where(up, F, np.inf)))
        j = int(np.argmax(np.where(low, F, -np.inf)))
        gap = F[j] - F[i]
        if gap <= tol:
            break
        ai_old, aj_old = alphas[i], alphas[j]
        if yt[i] != yt[j]:
            L, H = max(0.0, aj_old - ai_old), min(C, C + aj_old - ai_old)
        else:
            L, H = max(0.0, ai_old + aj_old - C), min(C, ai_old + aj_old)
        quad = max(K[i, i] + K[j, j] - 2.0 * K[i, j], 1e-12)
        aj = snapped(min(H, max(L, aj_old + yt[j] * (F[i] - F[j]) / quad)))
        if aj == aj_old:
            break  # box-blocked pair; the final gap check reports the state
        ai = snapped(ai_old + yt[i] * yt[j] * (aj_old - aj))
        alphas[i], alphas[j] = ai, aj
        u += (yt[i] * (ai - ai_old)) * K[:, i] + (yt[j] * (aj - aj_old)) * K[:, j]
    else:
        raise SvmConvergenceError(
            f"SMO did not converge in {max_iter} iterations; "
            f"final KKT violation {gap:.3g}"
        )
    if gap > tol:
        raise SvmConvergenceError(
            f"SMO stalled on a box-blocked pair; final KKT violation {gap:.3g}"
        )

    F = u - yt
    free = (alphas > 0.0) & (alphas < C)
    if free.any():
        b = float(np.mean(yt[free] - u[free]))
    else:
        up = ((yt > 0) & (alphas < C)) | ((yt < 0) & (alphas > 0))
        low = ((yt > 0) & (alphas > 0)) | ((yt < 0) & (alphas < C))
        candidates = []
        if up.any():
            candidates.append(float(F[up].min()))
        if low.any():
            candidates.append(float(F[low].max()))
        b = -float(np.mean(candidates)) if candidates else 0.0
    return alphas, b, u + b


def platt_fit(decision_values, yt, max_iter=100):
    """Fit P(y=1|f) = 1 / (1 + exp(A f + B)) by regularized maximum likelihood
    (Newton with backtracking on the usual soft targets)."""
    from .logistic import sigmoid

    deci = np.asarray(decision_values, dtype=float)
    prior1 = int((yt > 0).sum())
    prior0 = len(yt) - prior1
    hi = (prior1 + 1.0) / (prior1 + 2.0)
    lo = 1.0 / (prior0 + 2.0)
    t = np.where(yt > 0, hi, lo)

    def nll(a, b):
        fab = deci * a + b
        return float((t * fab + np.logaddexp(0.0, -fab)).sum())

    A, B = 0.0, math.log((prior0 + 1.0) / (prior1 + 1.0))
    fval = nll(A, B)
    sigma = 1e-12
    for _ in range(max_iter):
        fab = deci * A + B
        p = sigmoid(-fab)
        q = 1.0 - p
        d2 = p * q
        h11 = float((deci * deci * d2).sum()) + sigma
        h22 = float(d2.sum()) + sigma
        h21 = float((deci * d2).sum())
        d1 = t - p
        g1 = float((deci * d1).sum())
        g2 = float(d1.sum())
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= 1e-10:
            newA, newB = A + step * dA, B + step * dB
            newf = nll(newA, newB)
            if newf < fval + 1e-4 * step * gd:
                A, B, fval = newA, newB, newf
                break
            step /= 2.0
        else:
            break
    return float(A), float(B)


def fit_svm(X, y, C: float = 1.0, kernel: str = "rbf", gamma="scale",
            feature_names=None) -> TrainedAggregator:
    if C <= 0:
        raise ValueError(f"C must be > 0, got {C}")
    X = check_features(X)
    y = check_labels(y)
    if np.all(X == X[0]):
        raise ValueError(
            "degenerate training set: every sample is the identical point, "
            "so no separating direction exists"
        )
    stats = fit_standardizer(X)
    Xs = apply_standardizer(X, stats)
    gamma_val = _resolve_gamma(gamma, Xs)
    yt = 2.0 * y - 1.0
    K = _kernel_matrix(Xs, Xs, kernel, gamma_val)
    alphas, b, f = _smo(K, yt, C)

    A, B = platt_fit(f, yt)
    sv = alphas > 0
    if feature_names is None:
        feature_names = default_feature_names(X.shape[1])
    return TrainedAggregator(
        method="svm",
        feature_names=list(feature_names),
        parameters={
            "support_vectors": Xs[sv].tolist(),
            "support_coefs": (alphas[sv] * yt[sv]).tolist(),
            "intercept": float(b),
            "kernel": kernel,
            "gamma": gamma_val,
            "platt_a": A,
            "platt_b": B,
        },
        hyperparameters={"C": C, "kernel": kernel, "gamma": gamma},
        train_stats=stats,
    )


def decision_values(model, X) -> np.ndarray:
    """Signed margin f(x) for already-standardized inputs."""
    sv = np.asarray(model.parameters["support_vectors"], dtype=float)
    coefs = np.asarray(model.parameters["support_coefs"], dtype=float)
    if len(sv) == 0:
        return np.full(len(X), model.parameters["intercept"])
    K = _kernel_matrix(np.asarray(X, dtype=float), sv,
                       model.parameters["kernel"], model.parameters["gamma"])
    return K @ coefs + model.parameters["intercept"]


@register_predictor("svm")
def _predict_svm(model, X):
    from .logistic import sigmoid

    f = decision_values(model, X)
    return sigmoid(-(f * model.parameters["platt_a"] + model.parameters["platt_b"]))
