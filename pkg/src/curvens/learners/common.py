"""Shared surface of the supervised aggregators: the trained-model record,
feature standardization, prediction dispatch, and persistence."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

AGG_FORMAT = "curvens-agg-v1"

METHODS = ("lr", "rf", "gnb", "svm")

# method -> callable(TrainedAggregator, standardized-or-raw X) -> P(machine)
_PREDICTORS = {}


def register_predictor(method):
    def wrap(fn):
        _PREDICTORS[method] = fn
        return fn

    return wrap


@dataclass
class TrainedAggregator:
    """A fitted supervised aggregator with its feature ordering.

    ``feature_names`` pins the column order; prediction realigns any
    differently-ordered input by name. ``train_stats`` holds the train-set
    per-column mean/std applied inside lr and svm (rf and gnb consume raw
    features).
    """

    method: str
    feature_names: list[str]
    parameters: dict
    hyperparameters: dict = field(default_factory=dict)
    train_stats: dict | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown aggregator method: {self.method!r}")


def check_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if set(np.unique(y)) != {0, 1}:
        raise ValueError("degenerate labels: need both classes (0 and 1)")
    return y.astype(int)


def check_features(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    return X


def fit_standardizer(X) -> dict:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return {"mean": mean.tolist(), "std": std.tolist()}


def apply_standardizer(X, stats) -> np.ndarray:
    return (X - np.asarray(stats["mean"])) / np.asarray(stats["std"])


def align_columns(X, columns, feature_names) -> np.ndarray:
    """Reorder X's columns (labeled by ``columns``) to the model's order."""
    X = check_features(X)
    if columns is None:
        if X.shape[1] != len(feature_names):
            raise ValueError(
                f"expected {len(feature_names)} feature columns, got {X.shape[1]}"
            )
        return X
    index = {name: i for i, name in enumerate(columns)}
    missing = [name for name in feature_names if name not in index]
    if missing:
        raise ValueError(f"missing feature column: {missing[0]}")
    return X[:, [index[name] for name in feature_names]]


def predict_proba(model: TrainedAggregator, X, columns=None) -> np.ndarray:
    """P(machine | x) per row; columns, when given, are realigned by name."""
    X = align_columns(X, columns, model.feature_names)
    if model.train_stats is not None:
        X = apply_standardizer(X, model.train_stats)
    try:
        predictor = _PREDICTORS[model.method]
    except KeyError:
        raise ValueError(f"no predictor registered for method {model.method!r}") from None
    p = np.asarray(predictor(model, X), dtype=float)
    return np.clip(p, 0.0, 1.0)


def save_aggregator(model: TrainedAggregator, path) -> None:
    payload = {"format": AGG_FORMAT, **asdict(model)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_aggregator(path) -> TrainedAggregator:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != AGG_FORMAT:
        raise ValueError(f"{path}: not a {AGG_FORMAT} file")
    payload.pop("format")
    return TrainedAggregator(**payload)


def default_feature_names(m: int) -> list[str]:
    return [f"f{j}" for j in range(m)]
