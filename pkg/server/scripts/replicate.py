#!/usr/bin/env python3
"""Scaled directional check against a running model server.

With the base model excluded from the scoring set, the summary-statistic
ensembles (mean/median of the per-scorer z scores) must beat the average
AUROC of the remaining individual sub-models on news-style data.

Requires both packages installed (curvens and curvens-server) and a server
hosting the requested checkpoints, e.g.:

    curvens-server --preset paper --port 8111
    python scripts/replicate.py --dataset xsum.jsonl \
        --endpoint http://127.0.0.1:8111 --out results/

The dataset is JSONL with one {"id","text","label":"human"} object per line
(news articles work well); the first --samples eligible entries are used.
"""
from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

from curvens.corpus import Dataset, load_jsonl, save_jsonl
from curvens.experiment import config_from_dict, emit_report, run_experiment

COMPLEXITY = {
    "gpt-neo-125m": 125_000_000,
    "gpt2": 124_000_000,
    "gpt2-medium": 355_000_000,
    "bert-base-cased": 110_000_000,
    "roberta-base": 125_000_000,
}


def build_config(dataset_path, endpoint, base, scorers, filler, args):
    def remote(name):
        return {
            "name": name,
            "kind": "remote",
            "params": {"endpoint": endpoint, "model": name, "timeout": 900.0},
            "complexity": COMPLEXITY.get(name, 0),
        }

    return config_from_dict({
        "datasets": [str(dataset_path)],
        "base_models": [remote(base)],
        "scoring_models": [remote(name) for name in scorers],
        "filler": remote(filler),
        "perturbation": {
            "span_length": 2,
            "mask_fraction": 0.15,
            "num_perturbations": args.n_perturbations,
            "buffer": 1,
            "seed": args.seed,
        },
        "generation": {
            "prompt_tokens": 30,
            "max_tokens": args.max_tokens,
            "temperature": 1.0,
            "seed": args.seed,
        },
        "methods": ["mean", "median", "max"],
        "exclude_base_from_scorers": True,
        "seed": args.seed,
    })


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dataset", required=True, help="human-sample JSONL")
    parser.add_argument("--endpoint", required=True, help="model-server URL")
    parser.add_argument("--base", default="gpt2")
    parser.add_argument("--scorers",
                        default="gpt-neo-125m,gpt2,gpt2-medium,bert-base-cased,roberta-base")
    parser.add_argument("--filler", default="t5-base")
    parser.add_argument("--samples", type=int, default=150)
    parser.add_argument("--n-perturbations", type=int, default=50)
    parser.add_argument("--max-tokens", type=int, default=150)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="replication-out")
    args = parser.parse_args(argv)

    scorers = [s.strip() for s in args.scorers.split(",") if s.strip()]
    if args.base not in scorers:
        scorers.append(args.base)

    human = load_jsonl(args.dataset)
    eligible = [s for s in human if len(s.text.split()) >= 35][: args.samples]
    if len(eligible) < args.samples:
        print(f"error: only {len(eligible)} samples with >= 35 words; "
              f"need {args.samples}", file=sys.stderr)
        return 2
    trimmed = Dataset(samples=tuple(eligible), name=human.name)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile("w", suffix=".jsonl", delete=False) as fh:
        trimmed_path = fh.name
    save_jsonl(trimmed, trimmed_path)

    cfg = build_config(trimmed_path, args.endpoint.rstrip("/"), args.base,
                       scorers, args.filler, args)
    report = run_experiment(cfg)
    for fmt, name in (("csv", "report.csv"), ("json", "report.json"),
                      ("markdown-table", "report.md")):
        (out_dir / name).write_bytes(emit_report(report, fmt))

    key = lambda method: (args.base, trimmed.name, method)  # noqa: E731
    cells = report.cells
    failed = [m for m in ("baseline", "mean", "median")
              if cells.get(key(m)) is None or cells[key(m)].auroc is None]
    if failed:
        for m in failed:
            cell = cells.get(key(m))
            print(f"error: cell {m} failed: "
                  f"{cell.error if cell else 'missing'}", file=sys.stderr)
        return 1

    baseline = cells[key("baseline")].auroc
    mean = cells[key("mean")].auroc
    median = cells[key("median")].auroc
    print(json.dumps({
        "base": args.base,
        "excluded_scorer_baseline": round(baseline, 4),
        "ensemble_mean": round(mean, 4),
        "ensemble_median": round(median, 4),
        "direction_holds": mean > baseline and median > baseline,
    }, indent=2))
    if mean > baseline and median > baseline:
        print("PASS: ensemble mean and median both beat the excluded-scorer baseline")
        return 0
    print("FAIL: ensemble did not beat the excluded-scorer baseline", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
