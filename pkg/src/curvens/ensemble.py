"""Combining the M sub-model scores into one detection score.

Summary statistics (max/mean/median) keep the zero-shot property; the
supervised aggregators and the multi-stage estimator trade it for accuracy.
The multi-stage estimator walks sub-models from most to least complex and
halts once a d-score drops below its trained threshold, returning the mean
of the d values seen so far.
"""
from __future__ import annotations

import json
import statistics
import warnings
from dataclasses import dataclass, field

import numpy as np

from .curvature import ScoreMatrix
from .evaluation import auroc_from_labels
from .learners import TrainedAggregator, predict_proba

MULTISTAGE_FORMAT = "curvens-multistage-v1"

CATEGORY2_KINDS = ("max", "mean", "median")
CATEGORY3_KINDS = ("lr", "rf", "gnb", "svm", "multistage")
KINDS = ("single",) + CATEGORY2_KINDS + CATEGORY3_KINDS

DEFAULT_Z_GRID = tuple(i * 0.25 for i in range(13))  # 0.0 .. 3.0


@dataclass(frozen=True)
class EnsembleMethod:
    """One way of turning the per-scorer score row into a detection score.

    ``feature`` picks the per-scorer input (z by default; the multi-stage
    estimator is defined over raw d, so its default is d).
    """

    kind: str
    feature: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ensemble kind: {self.kind!r}")
        if self.feature not in (None, "d", "z"):
            raise ValueError(f"feature must be 'd' or 'z', got {self.feature!r}")
        if self.kind == "single" and "scorer" not in self.params:
            raise ValueError("kind='single' needs a 'scorer' name in params")

    @property
    def resolved_feature(self) -> str:
        if self.feature is not None:
            return self.feature
        return "d" if self.kind == "multistage" else "z"

    @property
    def name(self) -> str:
        if self.kind == "single":
            return f"single:{self.params['scorer']}"
        return self.kind


def summarize(scores, kind: str) -> float:
    """Arithmetic mean, median (even count: midpoint of the middle pair), or max."""
    values = [float(s) for s in scores]
    if not values:
        raise ValueError("cannot summarize an empty score list")
    if kind == "mean":
        return statistics.fmean(values)
    if kind == "median":
        return float(statistics.median(values))
    if kind == "max":
        return max(values)
    raise ValueError(f"unknown summary statistic: {kind!r}")


@dataclass(frozen=True)
class MultiStageModel:
    """Sub-models in decreasing-complexity order with per-stage halt thresholds.

    Stage i halts when d_i < mu[i] - z_opt[i] * sigma[i]; mu and sigma are
    training-set statistics of that scorer's d values.
    """

    ordered_scorers: tuple[str, ...]
    mu: tuple[float, ...]
    sigma: tuple[float, ...]
    z_opt: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "ordered_scorers", tuple(self.ordered_scorers))
        object.__setattr__(self, "mu", tuple(float(v) for v in self.mu))
        object.__setattr__(self, "sigma", tuple(float(v) for v in self.sigma))
        object.__setattr__(self, "z_opt", tuple(float(v) for v in self.z_opt))
        n = len(self.ordered_scorers)
        if not (len(self.mu) == len(self.sigma) == len(self.z_opt) == n):
            raise ValueError("per-stage statistics must match the scorer count")
        if any(s < 0 for s in self.sigma):
            raise ValueError("sigma must be >= 0 for every scorer")

    def threshold(self, stage: int) -> float:
        return self.mu[stage] - self.z_opt[stage] * self.sigma[stage]


def multistage_score(model: MultiStageModel, sample_row: dict) -> float:
    """Walk stages in order, halt below threshold, return mean of visited d values."""
    visited = []
    for stage, scorer in enumerate(model.ordered_scorers):
        if scorer not in sample_row:
            raise ValueError(f"missing scorer value: {scorer}")
        d = float(sample_row[scorer])
        visited.append(d)
        if d < model.threshold(stage):
            break
    return statistics.fmean(visited)


def order_by_complexity(complexity: dict) -> list[str]:
    """Strictly decreasing complexity; equal complexities break lexicographically."""
    return [name for name, _ in sorted(complexity.items(), key=lambda kv: (-kv[1], kv[0]))]


def fit_multistage(matrix: ScoreMatrix, complexity: dict, z_grid=DEFAULT_Z_GRID,
                   feature: str = "d") -> MultiStageModel:
    """Greedy per-stage scan of z_grid maximizing training AUROC of the final score.

    While stage i is being tuned, later stages hold the grid's middle value;
    earlier stages keep their chosen values. Score ties prefer the smaller
    z_opt candidate.
    """
    z_grid = [float(z) for z in z_grid]
    if not z_grid:
        raise ValueError("z_grid must be non-empty")
    if len(set(matrix.labels)) < 2:
        raise ValueError("training matrix needs both labels")
    missing = [s for s in matrix.scorer_names if s not in complexity]
    if missing:
        raise ValueError(f"complexity unknown for scorer: {missing[0]}")
    for name, value in complexity.items():
        if value <= 0:
            raise ValueError(f"complexity must be > 0 for scorer {name!r}")

    ordered = order_by_complexity({s: complexity[s] for s in matrix.scorer_names})
    features = matrix.features(ordered, feature=feature)
    mu = features.mean(axis=0)
    sigma = features.std(axis=0)
    for stage, s in enumerate(sigma):
        if s == 0.0:
            warnings.warn(
                f"scorer {ordered[stage]!r} has zero d spread on the training set; "
                "its halt threshold degenerates to the mean",
                UserWarning,
                stacklevel=2,
            )

    midpoint = z_grid[len(z_grid) // 2]
    chosen = [midpoint] * len(ordered)

    def training_auroc(z_values):
        model = MultiStageModel(ordered, mu, sigma, z_values)
        scores = [
            multistage_score(model, dict(zip(ordered, row))) for row in features
        ]
        return auroc_from_labels(matrix.labels, scores)

    for stage in range(len(ordered)):
        best_z, best_score = None, -np.inf
        for z in z_grid:
            trial = list(chosen)
            trial[stage] = z
            score = training_auroc(trial)
            if score > best_score or (score == best_score and z < best_z):
                best_z, best_score = z, score
        chosen[stage] = best_z
    return MultiStageModel(ordered, mu, sigma, chosen)


def apply_ensemble(method: EnsembleMethod, matrix: ScoreMatrix, trained=None) -> list[float]:
    """Per-sample detection scores, higher = more machine-like."""
    feature = method.resolved_feature
    if method.kind == "single":
        return [float(v) for v in matrix.column(method.params["scorer"], feature=feature)]
    if method.kind in CATEGORY2_KINDS:
        block = matrix.features(feature=feature)
        return [summarize(row, method.kind) for row in block]
    if method.kind == "multistage":
        if not isinstance(trained, MultiStageModel):
            raise ValueError("multistage needs a trained MultiStageModel")
        block = matrix.features(trained.ordered_scorers, feature=feature)
        return [
            multistage_score(trained, dict(zip(trained.ordered_scorers, row)))
            for row in block
        ]
    if not isinstance(trained, TrainedAggregator):
        raise ValueError(f"method {method.kind!r} needs a trained aggregator model")
    block = matrix.features(feature=feature)
    p = predict_proba(trained, block, columns=matrix.scorer_names)
    return [float(v) for v in p]


def exclude_scorer(matrix: ScoreMatrix, name: str) -> ScoreMatrix:
    return matrix.exclude_scorer(name)


def save_multistage(model: MultiStageModel, path) -> None:
    payload = {
        "format": MULTISTAGE_FORMAT,
        "ordered_scorers": list(model.ordered_scorers),
        "mu": list(model.mu),
        "sigma": list(model.sigma),
        "z_opt": list(model.z_opt),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_multistage(path) -> MultiStageModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != MULTISTAGE_FORMAT:
        raise ValueError(f"{path}: not a {MULTISTAGE_FORMAT} file")
    return MultiStageModel(
        ordered_scorers=tuple(payload["ordered_scorers"]),
        mu=tuple(payload["mu"]),
        sigma=tuple(payload["sigma"]),
        z_opt=tuple(payload["z_opt"]),
    )
