"""Perturbation discrepancy d and normalized score z, per sample and sub-model.

d = logprob(original) - mean(logprob(rewrites)) estimates the local curvature
of the scorer's log-probability around the sample; z rescales d by the
dispersion of the rewrite log-probs so scores are comparable across scorers.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

Z_CAP = 1e6


class DegenerateVarianceWarning(UserWarning):
    """All rewrites scored identically; z capped to keep the ranking usable."""


class ScoreMatrixError(RuntimeError):
    pass


def _check_finite(original_lp, perturbed_lps):
    if len(perturbed_lps) == 0:
        raise ValueError("perturbed log-prob list is empty")
    if not math.isfinite(original_lp):
        raise ValueError(f"non-finite log-prob at index original: {original_lp}")
    for i, lp in enumerate(perturbed_lps):
        if not math.isfinite(lp):
            raise ValueError(f"non-finite log-prob at index {i}: {lp}")


def discrepancy(original_lp: float, perturbed_lps) -> float:
    """d = original log-prob minus the mean rewrite log-prob."""
    _check_finite(original_lp, perturbed_lps)
    return original_lp - math.fsum(perturbed_lps) / len(perturbed_lps)


def perturbed_std(perturbed_lps) -> float:
    """Sample standard deviation (N-1 denominator) of the rewrite log-probs."""
    n = len(perturbed_lps)
    if n < 2:
        raise ValueError(f"need >= 2 perturbed log-probs for a std, got {n}")
    mean = math.fsum(perturbed_lps) / n
    return math.sqrt(math.fsum((x - mean) ** 2 for x in perturbed_lps) / (n - 1))


def normalized_discrepancy(original_lp: float, perturbed_lps) -> float:
    """z = d / sample std of the rewrite log-probs (per-sample normalization).

    Degenerate variance: z = 0 when d = 0, else sign(d) * Z_CAP with a warning.
    """
    _check_finite(original_lp, perturbed_lps)
    d = discrepancy(original_lp, perturbed_lps)
    sigma = perturbed_std(perturbed_lps)
    if sigma == 0.0:
        if d == 0.0:
            return 0.0
        warnings.warn(
            f"zero variance across rewrites with d={d:g}; capping z at {Z_CAP:g}",
            DegenerateVarianceWarning,
            stacklevel=2,
        )
        return math.copysign(Z_CAP, d)
    return d / sigma


@dataclass(frozen=True)
class SubModelScore:
    """One (sample, scorer) cell: raw log-probs plus its d and z."""

    scorer_name: str
    original_logprob: float
    perturbed_logprobs: tuple[float, ...]
    d: float
    z: float

    def __post_init__(self):
        object.__setattr__(self, "perturbed_logprobs", tuple(self.perturbed_logprobs))
        expected = discrepancy(self.original_logprob, self.perturbed_logprobs)
        if abs(self.d - expected) > 1e-12:
            raise ValueError(
                f"inconsistent d for scorer {self.scorer_name!r}: "
                f"{self.d} vs recomputed {expected}"
            )

    @classmethod
    def from_logprobs(cls, scorer_name, original_logprob, perturbed_logprobs):
        return cls(
            scorer_name=scorer_name,
            original_logprob=original_logprob,
            perturbed_logprobs=tuple(perturbed_logprobs),
            d=discrepancy(original_logprob, perturbed_logprobs),
            z=normalized_discrepancy(original_logprob, perturbed_logprobs),
        )


class ScoreMatrix:
    """Per-sample, per-scorer d and z values plus the raw log-probs behind them.

    Raw log-probs are kept so any normalization variant can be recomputed
    without re-scoring, which is the expensive step.
    """

    def __init__(self, sample_ids, labels, scorer_names, original_logprobs,
                 perturbed_logprobs, d_values, z_values, errors=None):
        self.sample_ids = list(sample_ids)
        self.labels = list(labels)
        self.scorer_names = list(scorer_names)
        if len(set(self.scorer_names)) != len(self.scorer_names):
            raise ValueError("scorer names must be unique")
        self.original_logprobs = np.asarray(original_logprobs, dtype=float)
        self.perturbed_logprobs = perturbed_logprobs  # {(sample_id, scorer): tuple}
        self.d_values = np.asarray(d_values, dtype=float)
        self.z_values = np.asarray(z_values, dtype=float)
        self.errors = dict(errors or {})  # {(sample_id, scorer): message}
        n, m = len(self.sample_ids), len(self.scorer_names)
        for arr, label in ((self.d_values, "d"), (self.z_values, "z"),
                           (self.original_logprobs, "original log-prob")):
            if arr.shape != (n, m):
                raise ValueError(f"{label} matrix shape {arr.shape} != ({n}, {m})")
        if len(self.labels) != n:
            raise ValueError(f"{len(self.labels)} labels for {n} samples")

    @property
    def n_samples(self):
        return len(self.sample_ids)

    def column(self, scorer_name, feature="z"):
        """One scorer's scores for every sample, as a 1-D array."""
        j = self._scorer_index(scorer_name)
        values = self.z_values if feature == "z" else self.d_values
        return values[:, j].copy()

    def features(self, scorer_names=None, feature="z"):
        """Sample-by-scorer feature block realigned to the requested column order."""
        names = list(scorer_names) if scorer_names is not None else self.scorer_names
        cols = [self._scorer_index(s) for s in names]
        values = self.z_values if feature == "z" else self.d_values
        return values[:, cols].copy()

    def subset(self, indices) -> "ScoreMatrix":
        """Row-sliced copy (train/test splits)."""
        indices = list(indices)
        ids = [self.sample_ids[i] for i in indices]
        keep = set(ids)
        raw = {k: v for k, v in self.perturbed_logprobs.items() if k[0] in keep}
        errors = {k: v for k, v in self.errors.items() if k[0] in keep}
        return ScoreMatrix(
            sample_ids=ids,
            labels=[self.labels[i] for i in indices],
            scorer_names=self.scorer_names,
            original_logprobs=self.original_logprobs[indices, :],
            perturbed_logprobs=raw,
            d_values=self.d_values[indices, :],
            z_values=self.z_values[indices, :],
            errors=errors,
        )

    def exclude_scorer(self, name) -> "ScoreMatrix":
        """Copy of the matrix without one scorer column (base-model exclusion)."""
        j = self._scorer_index(name)
        keep = [i for i in range(len(self.scorer_names)) if i != j]
        kept_names = [self.scorer_names[i] for i in keep]
        raw = {
            (sid, s): lps
            for (sid, s), lps in self.perturbed_logprobs.items()
            if s != name
        }
        errors = {(sid, s): m for (sid, s), m in self.errors.items() if s != name}
        return ScoreMatrix(
            sample_ids=self.sample_ids,
            labels=self.labels,
            scorer_names=kept_names,
            original_logprobs=self.original_logprobs[:, keep],
            perturbed_logprobs=raw,
            d_values=self.d_values[:, keep],
            z_values=self.z_values[:, keep],
            errors=errors,
        )

    def _scorer_index(self, name):
        try:
            return self.scorer_names.index(name)
        except ValueError:
            raise ValueError(f"unknown scorer: {name}") from None


def build_score_matrix(perturbation_sets, scorers, strict=False, jobs=1) -> ScoreMatrix:
    """Score every (sample, scorer) cell, reusing one perturbation set across scorers.

    Each cell costs exactly N+1 log_prob calls. Scorer failures are recorded
    per cell (NaN in the matrix); the build only fails when strict=True or a
    scorer failed on every sample.
    """
    if not scorers:
        raise ValueError("need at least one scorer")
    sets = list(perturbation_sets)
    if not sets:
        raise ValueError("need at least one perturbation set")
    configs = {pset.config for pset in sets}
    if len(configs) > 1:
        raise ValueError("perturbation sets mix different configs")

    names = [s.name for s in scorers]
    if len(set(names)) != len(names):
        raise ValueError("scorer names must be unique")

    cells = [(i, j) for i in range(len(sets)) for j in range(len(scorers))]

    def score_cell(cell):
        i, j = cell
        pset, scorer = sets[i], scorers[j]
        original = scorer.log_prob(pset.original.text).total_logprob
        perturbed = tuple(scorer.log_prob(t).total_logprob for t in pset.perturbed)
        return SubModelScore.from_logprobs(scorer.name, original, perturbed)

    results = {}
    errors = {}
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(lambda c: _try_cell(score_cell, c), cells))
    else:
        outcomes = [_try_cell(score_cell, c) for c in cells]
    for cell, (score, err) in zip(cells, outcomes):
        i, j = cell
        key = (sets[i].original.id, scorers[j].name)
        if err is not None:
            if strict:
                raise ScoreMatrixError(f"scorer {scorers[j].name!r} failed on "
                                       f"sample {sets[i].original.id!r}: {err}")
            errors[key] = err
        else:
            results[cell] = score

    for j, scorer in enumerate(scorers):
        if all((i, j) not in results for i in range(len(sets))):
            raise ScoreMatrixError(
                f"scorer {scorer.name!r} failed on every sample; first error: "
                f"{errors[(sets[0].original.id, scorer.name)]}"
            )

    n, m = len(sets), len(scorers)
    originals = np.full((n, m), np.nan)
    d_values = np.full((n, m), np.nan)
    z_values = np.full((n, m), np.nan)
    raw = {}
    for (i, j), score in results.items():
        originals[i, j] = score.original_logprob
        d_values[i, j] = score.d
        z_values[i, j] = score.z
        raw[(sets[i].original.id, score.scorer_name)] = score.perturbed_logprobs
    return ScoreMatrix(
        sample_ids=[p.original.id for p in sets],
        labels=[p.original.label for p in sets],
        scorer_names=names,
        original_logprobs=originals,
        perturbed_logprobs=raw,
        d_values=d_values,
        z_values=z_values,
        errors=errors,
    )


def _try_cell(fn, cell):
    try:
        return fn(cell), None
    except Exception as e:  # noqa: BLE001 - cell-level fault isolation
        return None, str(e)


CSV_HEADER = ["sample_id", "label", "scorer", "original_logprob", "d", "z", "n_perturbations"]


def write_score_csv(matrix: ScoreMatrix, path, raw_path=None) -> None:
    """One row per (sample, scorer) cell; raw rewrite log-probs go to a sidecar JSONL."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for i, sid in enumerate(matrix.sample_ids):
            for j, scorer in enumerate(matrix.scorer_names):
                raw = matrix.perturbed_logprobs.get((sid, scorer))
                writer.writerow([
                    sid,
                    matrix.labels[i],
                    scorer,
                    repr(float(matrix.original_logprobs[i, j])),
                    repr(float(matrix.d_values[i, j])),
                    repr(float(matrix.z_values[i, j])),
                    len(raw) if raw is not None else 0,
                ])
    if raw_path is not None:
        with open(raw_path, "w", encoding="utf-8") as fh:
            for i, sid in enumerate(matrix.sample_ids):
                for scorer in matrix.scorer_names:
                    raw = matrix.perturbed_logprobs.get((sid, scorer))
                    if raw is None:
                        continue
                    fh.write(json.dumps({
                        "sample_id": sid,
                        "scorer": scorer,
                        "perturbed_logprobs": list(raw),
                    }) + "\n")


def read_score_csv(path, raw_path=None) -> ScoreMatrix:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        rows = list(reader)
    sample_ids, labels = [], []
    seen = {}
    scorer_names = []
    for row in rows:
        if row["sample_id"] not in seen:
            seen[row["sample_id"]] = True
            sample_ids.append(row["sample_id"])
            labels.append(row["label"])
        if row["scorer"] not in scorer_names:
            scorer_names.append(row["scorer"])
    n, m = len(sample_ids), len(scorer_names)
    sample_index = {s: i for i, s in enumerate(sample_ids)}
    scorer_index = {s: j for j, s in enumerate(scorer_names)}
    originals = np.full((n, m), np.nan)
    d_values = np.full((n, m), np.nan)
    z_values = np.full((n, m), np.nan)
    for row in rows:
        i, j = sample_index[row["sample_id"]], scorer_index[row["scorer"]]
        originals[i, j] = float(row["original_logprob"])
        d_values[i, j] = float(row["d"])
        z_values[i, j] = float(row["z"])
    raw = {}
    if raw_path is not None:
        with open(raw_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = json.loads(line)
                raw[(record["sample_id"], record["scorer"])] = tuple(
                    record["perturbed_logprobs"]
                )
    return ScoreMatrix(
        sample_ids=sample_ids,
        labels=labels,
        scorer_names=scorer_names,
        original_logprobs=originals,
        perturbed_logprobs=raw,
        d_values=d_values,
        z_values=z_values,
    )
