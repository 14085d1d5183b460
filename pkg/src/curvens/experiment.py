"""The full experiment runner: generate, perturb once, score under every
sub-model, evaluate every ensembling method, and emit the report grids."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from .corpus import LABEL_MACHINE, load_jsonl
from .curvature import build_score_matrix
from .ensemble import (
    CATEGORY2_KINDS,
    EnsembleMethod,
    apply_ensemble,
    fit_multistage,
)
from .evaluation import GenerationConfig, auroc_from_labels, make_synthetic_dataset
from .learners import fit_method
from .lm import ModelSpec, build_model, spec_complexity
from .perturb import PerturbationConfig, perturb_sample
from .rng import derive_rng, derive_seed

log = logging.getLogger(__name__)

REPORT_FORMAT = "curvens-report-v1"
BASELINE_METHOD = "baseline"


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple[str, ...]
    base_models: tuple[ModelSpec, ...]
    scoring_models: tuple[ModelSpec, ...]
    filler: ModelSpec
    perturbation: PerturbationConfig = PerturbationConfig()
    generation: GenerationConfig = GenerationConfig()
    methods: tuple[EnsembleMethod, ...] = (EnsembleMethod(kind="mean"),)
    exclude_base_from_scorers: bool = True
    train_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "datasets", tuple(self.datasets))
        object.__setattr__(self, "base_models", tuple(self.base_models))
        object.__setattr__(self, "scoring_models", tuple(self.scoring_models))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.scoring_models:
            raise ValueError("scoring_models must be non-empty")
        if not 0 < self.train_fraction < 1:
            raise ValueError(f"train_fraction must be in (0,1), got {self.train_fraction}")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate method names: {sorted(names)}")
        scorer_names = [s.name for s in self.scoring_models]
        if len(set(scorer_names)) != len(scorer_names):
            raise ValueError(f"duplicate scoring model names: {sorted(scorer_names)}")

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True, default=str).encode()
        ).hexdigest()[:16]


def config_from_dict(raw: dict) -> ExperimentConfig:
    def spec(entry):
        return ModelSpec(
            name=entry["name"],
            kind=entry["kind"],
            params=dict(entry.get("params", {})),
            complexity=int(entry.get("complexity", 0)),
        )

    def method(entry):
        if isinstance(entry, str):
            if entry.startswith("single:"):
                return EnsembleMethod(kind="single", params={"scorer": entry[7:]})
            return EnsembleMethod(kind=entry)
        return EnsembleMethod(
            kind=entry["kind"],
            feature=entry.get("feature"),
            params=dict(entry.get("params", {})),
        )

    try:
        return ExperimentConfig(
            datasets=tuple(raw["datasets"]),
            base_models=tuple(spec(e) for e in raw["base_models"]),
            scoring_models=tuple(spec(e) for e in raw["scoring_models"]),
            filler=spec(raw["filler"]),
            perturbation=PerturbationConfig(**raw.get("perturbation", {})),
            generation=GenerationConfig(**raw.get("generation", {})),
            methods=tuple(method(e) for e in raw.get("methods", ["mean"])),
            exclude_base_from_scorers=bool(raw.get("exclude_base_from_scorers", True)),
            train_fraction=float(raw.get("train_fraction", 0.5)),
            seed=int(raw.get("seed", 0)),
        )
    except KeyError as e:
        raise ValueError(f"experiment config missing field {e.args[0]!r}") from None


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: line {e.lineno}: malformed JSON ({e.msg})") from None
    return config_from_dict(raw)


@dataclass(frozen=True)
class CellResult:
    auroc: float | None
    n_train: int = 0
    n_test: int = 0
    error: str | None = None


class ExperimentReport:
    """AUROC per (base model, dataset, method), with per-method averages."""

    def __init__(self, cells, method_order, metadata):
        self.cells = dict(cells)  # {(base, dataset, method): CellResult}
        self.method_order = list(method_order)
        self.metadata = dict(metadata)

    @property
    def averages(self) -> dict:
        out = {}
        for method in self.method_order:
            values = [
                c.auroc for (b, d, m), c in self.cells.items()
                if m == method and c.auroc is not None
            ]
            if values:
                out[method] = float(np.mean(values))
        return out

    def rows(self):
        """Cells in a stable (base, dataset, method) order."""
        bases, datasets = [], []
        for b, d, _ in self.cells:
            if b not in bases:
                bases.append(b)
            if d not in datasets:
                datasets.append(d)
        for b in bases:
            for d in datasets:
                for m in self.method_order:
                    if (b, d, m) in self.cells:
                        yield b, d, m, self.cells[(b, d, m)]

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "metadata": self.metadata,
            "method_order": self.method_order,
            "cells": [
                {
                    "base_model": b,
                    "dataset": d,
                    "method": m,
                    "auroc": cell.auroc,
                    "n_train": cell.n_train,
                    "n_test": cell.n_test,
                    "error": cell.error,
                }
                for b, d, m, cell in self.rows()
            ],
            "averages": self.averages,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentReport":
        cells = {
            (r["base_model"], r["dataset"], r["method"]): CellResult(
                auroc=r["auroc"],
                n_train=r["n_train"],
                n_test=r["n_test"],
                error=r.get("error"),
            )
            for r in raw["cells"]
        }
        return cls(cells=cells, method_order=raw["method_order"], metadata=raw["metadata"])

    def report_hash(self) -> str:
        return hashlib.sha256(emit_report(self, "json")).hexdigest()

    def __eq__(self, other):
        return (
            isinstance(other, ExperimentReport)
            and self.cells == other.cells
            and self.method_order == other.method_order
            and self.metadata == other.metadata
        )


def stratified_split(labels, fraction, rng):
    """Per-class shuffled split; returns (train_idx, test_idx), both non-empty
    per class."""
    labels = list(labels)
    train, test = [], []
    for label in sorted(set(labels)):
        idx = [i for i, lab in enumerate(labels) if lab == label]
        if len(idx) < 2:
            raise ValueError(f"class {label!r} needs >= 2 samples to split")
        perm = rng.permutation(len(idx))
        n_train = min(max(int(round(fraction * len(idx))), 1), len(idx) - 1)
        train.extend(idx[p] for p in perm[:n_train])
        test.extend(idx[p] for p in perm[n_train:])
    return sorted(train), sorted(test)


def _evaluate_method(method, matrix, split, cfg, base_name, dataset_name, complexity):
    """AUROC of one method on one cell; category 3 trains on the split."""
    if method.kind in ("single",) + CATEGORY2_KINDS:
        scores = apply_ensemble(method, matrix)
        value = auroc_from_labels(matrix.labels, scores)
        return CellResult(auroc=value, n_train=0, n_test=matrix.n_samples), matrix, scores
    train_idx, test_idx = split
    train, test = matrix.subset(train_idx), matrix.subset(test_idx)
    fit_seed = derive_seed(cfg.seed, "fit", base_name, dataset_name, method.name)
    if method.kind == "multistage":
        kwargs = {}
        if "z_grid" in method.params:
            kwargs["z_grid"] = method.params["z_grid"]
        trained = fit_multistage(
            train, complexity=complexity, feature=method.resolved_feature, **kwargs
        )
    else:
        X = train.features(feature=method.resolved_feature)
        y = [1 if lab == LABEL_MACHINE else 0 for lab in train.labels]
        params = {k: v for k, v in method.params.items()}
        trained = fit_method(method.kind, X, y, params, seed=fit_seed,
                             feature_names=train.scorer_names)
    scores = apply_ensemble(method, test, trained=trained)
    value = auroc_from_labels(test.labels, scores)
    return CellResult(auroc=value, n_train=len(train_idx), n_test=len(test_idx)), test, scores


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, score_sink=None) -> ExperimentReport:
    """Run the full grid. Per (base, dataset): one synthetic dataset, one
    perturbation pass shared by all scorers, one score matrix, every method.

    score_sink, when given, receives (base, dataset, method, sample_ids,
    labels, scores) for each evaluated cell.
    """
    scorers = {spec.name: build_model(spec) for spec in cfg.scoring_models}
    needs_complexity = any(m.kind == "multistage" for m in cfg.methods)
    complexity = (
        {spec.name: spec_complexity(spec) for spec in cfg.scoring_models}
        if needs_complexity
        else {spec.name: 0 for spec in cfg.scoring_models}
    )
    filler = build_model(cfg.filler)

    method_order = [m.name for m in cfg.methods]
    if cfg.exclude_base_from_scorers and BASELINE_METHOD not in method_order:
        method_order = [BASELINE_METHOD] + method_order

    cells = {}
    for dataset_path in cfg.datasets:
        human = load_jsonl(dataset_path)
        for base in cfg.base_models:
            key_base, key_ds = base.name, human.name
            try:
                matrix, split = _build_cell_matrix(cfg, human, base, scorers, filler, jobs)
            except Exception as e:  # noqa: BLE001 - cell-level fault isolation
                log.warning("cell (%s, %s) failed: %s", key_base, key_ds, e)
                for m in method_order:
                    cells[(key_base, key_ds, m)] = CellResult(
                        auroc=None, error=f"({key_base}, {key_ds}): {e}"
                    )
                continue
            if cfg.exclude_base_from_scorers:
                singles = [
                    auroc_from_labels(
                        matrix.labels,
                        apply_ensemble(
                            EnsembleMethod(kind="single", params={"scorer": s}), matrix
                        ),
                    )
                    for s in matrix.scorer_names
                ]
                cells[(key_base, key_ds, BASELINE_METHOD)] = CellResult(
                    auroc=float(np.mean(singles)), n_train=0, n_test=matrix.n_samples
                )
            for method in cfg.methods:
                try:
                    cell, used, scores = _evaluate_method(
                        method, matrix, split, cfg, key_base, key_ds,
                        {s: complexity[s] for s in matrix.scorer_names},
                    )
                    cells[(key_base, key_ds, method.name)] = cell
                    if score_sink is not None:
                        score_sink(key_base, key_ds, method.name,
                                   used.sample_ids, used.labels, scores)
                except Exception as e:  # noqa: BLE001
                    log.warning("method %s failed on (%s, %s): %s",
                                method.name, key_base, key_ds, e)
                    cells[(key_base, key_ds, method.name)] = CellResult(
                        auroc=None, error=f"({key_base}, {key_ds}, {method.name}): {e}"
                    )
    return ExperimentReport(
        cells=cells,
        method_order=method_order,
        metadata={"config_hash": cfg.config_hash(), "seed": cfg.seed},
    )


def _build_cell_matrix(cfg, human, base, scorers, filler, jobs):
    generator = build_model(base)
    gen_cfg = replace(
        cfg.generation,
        seed=derive_seed(cfg.generation.seed, base.name, human.name),
    )
    synthetic = make_synthetic_dataset(human, generator, gen_cfg)
    pert_cfg = replace(
        cfg.perturbation,
        seed=derive_seed(cfg.perturbation.seed, base.name, human.name),
    )
    sets = [perturb_sample(s, filler, pert_cfg) for s in synthetic]
    cell_scorers = [
        scorers[spec.name]
        for spec in cfg.scoring_models
        if not (cfg.exclude_base_from_scorers and spec.name == base.name)
    ]
    matrix = build_score_matrix(sets, cell_scorers, jobs=jobs)
    split = stratified_split(
        matrix.labels,
        cfg.train_fraction,
        derive_rng(cfg.seed, "split", base.name, human.name),
    )
    return matrix, split


def emit_report(report: ExperimentReport, format: str = "csv") -> bytes:
    """Deterministic serialization; markdown rounds to 2 decimals for display."""
    if format == "json":
        return (json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n").encode()
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["base_model", "dataset", "method", "auroc",
                         "n_test", "n_train", "seed"])
        seed = report.metadata.get("seed", "")
        for b, d, m, cell in report.rows():
            writer.writerow([
                b, d, m,
                "NA" if cell.auroc is None else repr(float(cell.auroc)),
                cell.n_test, cell.n_train, seed,
            ])
        for m, value in report.averages.items():
            writer.writerow(["average", "all", m, repr(float(value)), "", "", seed])
        return buf.getvalue().encode()
    if format in ("markdown-table", "md", "markdown"):
        return _emit_markdown(report)
    raise ValueError(f"unknown report format: {format!r}")


def _emit_markdown(report: ExperimentReport) -> bytes:
    methods = report.method_order

    def fmt(cell):
        if cell is None:
            return ""
        if cell.auroc is None:
            return "NA"
        return f"{cell.auroc:.2f}"

    lines = ["| Base model | Dataset | " + " | ".join(methods) + " |",
             "|---|---|" + "---|" * len(methods)]
    seen = []
    for b, d, _, _ in report.rows():
        if (b, d) not in seen:
            seen.append((b, d))
    for b, d in seen:
        row = [fmt(report.cells.get((b, d, m))) for m in methods]
        lines.append(f"| {b} | {d} | " + " | ".join(row) + " |")
    averages = report.averages
    avg = [f"{averages[m]:.2f}" if m in averages else "" for m in methods]
    lines.append("| Average |  | " + " | ".join(avg) + " |")
    return ("\n".join(lines) + "\n").encode()
