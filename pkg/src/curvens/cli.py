"""Command-line surface: discrete pipeline stages communicating via files,
so one perturbation pass can be scored under many models."""
from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys

from . import __version__
from .corpus import LABEL_MACHINE, TextSample, load_jsonl, save_jsonl
from .curvature import build_score_matrix, read_score_csv, write_score_csv
from .ensemble import (
    CATEGORY2_KINDS,
    CATEGORY3_KINDS,
    EnsembleMethod,
    apply_ensemble,
    fit_multistage,
    load_multistage,
    save_multistage,
)
from .evaluation import GenerationConfig, auroc_from_labels, make_synthetic_dataset
from .experiment import emit_report, load_config, run_experiment
from .learners import (
    DEFAULT_GRIDS,
    HyperGrid,
    fit_method,
    grid_search,
    load_aggregator,
    save_aggregator,
)
from .lm import ENDPOINT_ENV, NgramModel, train_ngram
from .perturb import (
    PerturbationConfig,
    perturb_sample,
    read_perturbation_sets,
    write_perturbation_sets,
)
from .remote import RemoteModel


class UsageError(Exception):
    pass


def parse_model_ref(ref: str, name: str | None = None):
    """Model reference: an n-gram model file, 'remote:ID', or 'remote:ID@URL'."""
    if ref.startswith("remote:"):
        spec = ref[len("remote:"):]
        if "@" in spec:
            model_id, endpoint = spec.split("@", 1)
        else:
            model_id, endpoint = spec, os.environ.get(ENDPOINT_ENV)
        if not endpoint:
            raise UsageError(
                f"remote model {model_id!r} needs an endpoint "
                f"('remote:{model_id}@URL' or ${ENDPOINT_ENV})"
            )
        return RemoteModel(endpoint=endpoint, model=model_id, name=name or model_id)
    if not os.path.exists(ref):
        raise UsageError(f"model file not found: {ref}")
    model = NgramModel.load(ref)
    if name:
        model.name = name
    return model


def _named_model(ref: str):
    if "=" in ref and not ref.startswith("remote:") and not os.path.exists(ref):
        name, raw = ref.split("=", 1)
        return parse_model_ref(raw, name=name)
    return parse_model_ref(ref)


def cmd_train_lm(args) -> int:
    corpus = load_jsonl(args.corpus)
    model = train_ngram(corpus, order=args.order, k=args.k,
                        min_count=args.min_count, name=args.name)
    model.save(args.out)
    print(f"trained {model.name}: order={model.order} |vocab|={len(model.vocab)} "
          f"-> {args.out}")
    return 0


def cmd_generate(args) -> int:
    model = parse_model_ref(args.model)
    text = model.generate(args.prompt, max_tokens=args.max_tokens,
                          temperature=args.temperature, seed=args.seed)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_perturb(args) -> int:
    dataset = load_jsonl(args.dataset)
    filler = parse_model_ref(args.filler)
    cfg = PerturbationConfig(
        span_length=args.span_length,
        mask_fraction=args.mask_fraction,
        num_perturbations=args.n_perturbations,
        buffer=args.buffer,
        seed=args.seed,
    )
    sets = [perturb_sample(sample, filler, cfg) for sample in dataset]
    write_perturbation_sets(sets, args.out)
    print(f"perturbed {len(sets)} samples x {cfg.num_perturbations} rewrites -> {args.out}")
    return 0


def cmd_score(args) -> int:
    sets = read_perturbation_sets(args.perturbations)
    scorers = [_named_model(ref) for ref in args.scorer]
    matrix = build_score_matrix(sets, scorers, jobs=args.jobs)
    write_score_csv(matrix, args.out, raw_path=args.raw_out)
    print(f"scored {matrix.n_samples} samples under {len(scorers)} scorers -> {args.out}")
    return 0


def _matrix_labels_as_ints(matrix):
    return [1 if lab == LABEL_MACHINE else 0 for lab in matrix.labels]


def cmd_fit(args) -> int:
    matrix = read_score_csv(args.scores)
    feature = args.feature or ("d" if args.method == "multistage" else "z")
    if args.method == "multistage":
        if not args.complexity:
            raise UsageError("multistage needs --complexity '{\"scorer\": int, ...}'")
        complexity = json.loads(args.complexity)
        model = fit_multistage(matrix, complexity=complexity, feature=feature)
        save_multistage(model, args.out)
        print(f"fit multistage over {len(model.ordered_scorers)} scorers -> {args.out}")
        return 0
    X = matrix.features(feature=feature)
    y = _matrix_labels_as_ints(matrix)
    params = json.loads(args.params) if args.params else {}
    if args.tune:
        grid = HyperGrid(method=args.method,
                         axes=json.loads(args.grid) if args.grid
                         else DEFAULT_GRIDS[args.method])
        params, cv = grid_search(args.method, grid, X, y,
                                 folds=args.folds, seed=args.seed)
        print(f"grid search: best {params} (cv auroc {cv:.4f})")
    model = fit_method(args.method, X, y, params, seed=args.seed,
                       feature_names=matrix.scorer_names)
    save_aggregator(model, args.out)
    print(f"fit {args.method} on {matrix.n_samples} samples -> {args.out}")
    return 0


def cmd_detect(args) -> int:
    method_kind = args.method
    if method_kind in CATEGORY3_KINDS and not args.model:
        raise UsageError(f"method {method_kind!r} needs --model")
    if method_kind == "single" and not args.scorer_name:
        raise UsageError("method 'single' needs --scorer-name")

    if args.text is not None:
        if not args.scorer or not args.filler:
            raise UsageError("--text mode needs --scorer (repeatable) and --filler")
        sample = TextSample(id=args.id, text=args.text, label="human")
        filler = parse_model_ref(args.filler)
        cfg = PerturbationConfig(
            span_length=args.span_length,
            mask_fraction=args.mask_fraction,
            num_perturbations=args.n_perturbations,
            buffer=args.buffer,
            seed=args.seed,
        )
        pset = perturb_sample(sample, filler, cfg)
        scorers = [_named_model(ref) for ref in args.scorer]
        matrix = build_score_matrix([pset], scorers, jobs=args.jobs)
    elif args.scores:
        matrix = read_score_csv(args.scores)
    else:
        raise UsageError("need --scores or --text")

    method = EnsembleMethod(
        kind=method_kind,
        feature=args.feature,
        params={"scorer": args.scorer_name} if method_kind == "single" else {},
    )
    trained = None
    if method_kind == "multistage":
        trained = load_multistage(args.model)
    elif method_kind in CATEGORY3_KINDS:
        trained = load_aggregator(args.model)
    scores = apply_ensemble(method, matrix, trained=trained)
    for sid, score in zip(matrix.sample_ids, scores):
        if args.threshold is None:
            print(f"{sid}\t{score:.6g}")
        else:
            verdict = "machine" if score >= args.threshold else "human"
            print(f"{sid}\t{score:.6g}\t{verdict}")
    return 0


def cmd_eval(args) -> int:
    by_method = {}
    with open(args.scores, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            by_method.setdefault(row["method"], []).append(
                (row["label"], float(row["score"]))
            )
    if not by_method:
        raise UsageError(f"no score rows in {args.scores}")
    for method in by_method:
        labels = [lab for lab, _ in by_method[method]]
        scores = [s for _, s in by_method[method]]
        print(f"{method}\t{auroc_from_labels(labels, scores):.6f}")
    return 0


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", name)


def cmd_experiment(args) -> int:
    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {args.config}") from None
    except (ValueError, TypeError) as e:
        raise UsageError(f"bad config: {e}") from None
    if args.exclude_base is not None:
        from dataclasses import replace

        cfg = replace(cfg, exclude_base_from_scorers=args.exclude_base)
    os.makedirs(args.out, exist_ok=True)

    cell_rows = {}

    def sink(base, dataset, method, ids, labels, scores):
        rows = cell_rows.setdefault((base, dataset), [])
        for sid, lab, score in zip(ids, labels, scores):
            rows.append((sid, lab, method, score))

    report = run_experiment(cfg, jobs=args.jobs, score_sink=sink)

    for fmt, filename in (("csv", "report.csv"), ("json", "report.json"),
                          ("markdown-table", "report.md")):
        with open(os.path.join(args.out, filename), "wb") as fh:
            fh.write(emit_report(report, fmt))
    for (base, dataset), rows in sorted(cell_rows.items()):
        path = os.path.join(
            args.out, f"scores-{_safe_name(base)}-{_safe_name(dataset)}.csv"
        )
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["sample_id", "label", "method", "score"])
            for sid, lab, method, score in rows:
                writer.writerow([sid, lab, method, repr(float(score))])

    failed = [key for key, cell in report.cells.items() if cell.error]
    for key in failed:
        print(f"FAILED cell {key}: {report.cells[key].error}", file=sys.stderr)
    print(f"report written to {args.out} "
          f"({len(report.cells)} cells, {len(failed)} failed)")
    return 1 if failed else 0


def cmd_make_synthetic(args) -> int:
    human = load_jsonl(args.dataset)
    generator = parse_model_ref(args.model)
    cfg = GenerationConfig(
        prompt_tokens=args.prompt_tokens,
        max_tokens=args.max_tokens,
        temperature=args.temperature,
        seed=args.seed,
    )
    out = make_synthetic_dataset(human, generator, cfg)
    save_jsonl(out, args.out)
    print(f"wrote {len(out)} samples ({len(out) // 2} pairs) -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curvens",
        description="Ensemble perturbation-curvature detection of machine-generated text.",
    )
    parser.add_argument("--version", action="version", version=f"curvens {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("train-lm", help="train a word n-gram model on a JSONL corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--k", type=float, default=1.0, help="add-k smoothing constant")
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--name", default="ngram")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_lm)

    p = sub.add_parser("generate", help="sample a continuation of a prompt")
    p.add_argument("--model", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--max-tokens", type=int, default=100)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("make-synthetic",
                       help="pair human samples with generated machine samples")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--prompt-tokens", type=int, default=30)
    p.add_argument("--max-tokens", type=int, default=100)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("perturb", help="mask-and-fill rewrites for every sample")
    p.add_argument("--dataset", required=True)
    p.add_argument("--filler", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-perturbations", type=int, default=50)
    p.add_argument("--span-length", type=int, default=2)
    p.add_argument("--mask-fraction", type=float, default=0.15)
    p.add_argument("--buffer", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("score", help="score perturbation sets under sub-models")
    p.add_argument("--perturbations", required=True)
    p.add_argument("--scorer", action="append", required=True,
                   help="model ref, repeatable; optional NAME=REF")
    p.add_argument("--out", required=True)
    p.add_argument("--raw-out", help="sidecar JSONL of raw perturbed log-probs")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("fit", help="train a supervised aggregator on a score matrix")
    p.add_argument("--scores", required=True)
    p.add_argument("--method", required=True,
                   choices=["lr", "rf", "gnb", "svm", "multistage"])
    p.add_argument("--feature", choices=["d", "z"])
    p.add_argument("--params", help="JSON hyperparameter object")
    p.add_argument("--tune", action="store_true", help="grid search before fitting")
    p.add_argument("--grid", help="JSON grid axes (default: built-in grid)")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--complexity", help="JSON {scorer: complexity} for multistage")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("detect", help="score samples with one ensembling method")
    p.add_argument("--scores", help="persisted score matrix CSV")
    p.add_argument("--text", help="raw text to run through the full pipeline")
    p.add_argument("--id", default="sample")
    p.add_argument("--method", required=True,
                   choices=["single"] + list(CATEGORY2_KINDS) + list(CATEGORY3_KINDS))
    p.add_argument("--scorer-name", help="column for method 'single'")
    p.add_argument("--model", help="trained aggregator/multistage file")
    p.add_argument("--feature", choices=["d", "z"])
    p.add_argument("--threshold", type=float)
    p.add_argument("--scorer", action="append", help="model ref for --text mode")
    p.add_argument("--filler", help="model ref for --text mode")
    p.add_argument("--n-perturbations", type=int, default=50)
    p.add_argument("--span-length", type=int, default=2)
    p.add_argument("--mask-fraction", type=float, default=0.15)
    p.add_argument("--buffer", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="AUROC per method from a per-sample score CSV")
    p.add_argument("--scores", required=True,
                   help="CSV with header sample_id,label,method,score")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run the full experiment grid from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--exclude-base", action=argparse.BooleanOptionalAction,
                   default=None, help="override the config's base-model exclusion")
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - single CLI error funnel
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
