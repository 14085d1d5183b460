"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with -s to see them).

The end-to-end separation bounds are regression bounds frozen from the
first seeded pilot run of this exact configuration (matched AUROCs came
out at 0.7407 / 0.9928 / 0.6899).
"""
import contextlib
import json
import math
import statistics
import time

import numpy as np
import pytest

from curvens.cli import main
from curvens.corpus import Dataset, save_jsonl, tokenize_words
from curvens.curvature import build_score_matrix, discrepancy, normalized_discrepancy
from curvens.ensemble import (
    EnsembleMethod,
    MultiStageModel,
    apply_ensemble,
    exclude_scorer,
    fit_multistage,
    multistage_score,
)
from curvens.evaluation import GenerationConfig, LabeledScores, auroc, auroc_from_labels, make_synthetic_dataset
from curvens.learners import fit_gnb, fit_random_forest, fit_svm, predict_proba
from curvens.learners.logistic import loss_and_grad
from curvens.lm import train_ngram
from curvens.perturb import PerturbationConfig, perturb_sample, select_mask_spans
from curvens.rng import derive_rng

from synth import make_corpus, make_vocab, markov_chain
from test_learners import gnb_oracle

pytestmark = pytest.mark.acceptance


@contextlib.contextmanager
def criterion(name, budget_seconds):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"[acceptance] {name}: FAIL")
        raise
    elapsed = time.monotonic() - start
    if elapsed > budget_seconds:
        print(f"[acceptance] {name}: FAIL (runtime {elapsed:.1f}s > {budget_seconds}s)")
        raise AssertionError(f"{name} exceeded runtime budget: {elapsed:.1f}s")
    print(f"[acceptance] {name}: PASS ({elapsed:.1f}s)")


def test_auroc_oracle_equivalence():
    with criterion("AUROC oracle equivalence", budget_seconds=5):
        rng = derive_rng("acc-auroc")
        for trial in range(1000):
            h = int(rng.integers(1, 201))
            g = int(rng.integers(1, 201))
            if trial % 2:
                human = rng.integers(0, 8, size=h).astype(float)  # forced ties
                machine = rng.integers(0, 8, size=g).astype(float)
            else:
                pool = rng.normal(size=max(h, g) // 2 + 1)
                human = pool[rng.integers(0, len(pool), size=h)]
                machine = pool[rng.integers(0, len(pool), size=g)]
            fast = auroc(LabeledScores(tuple(human), tuple(machine)))
            wins = (machine[None, :] > human[:, None]).sum()
            ties = (machine[None, :] == human[:, None]).sum()
            brute = (wins + 0.5 * ties) / (h * g)
            assert fast == brute


def test_curvature_identities():
    with criterion("Curvature identities", budget_seconds=1):
        rng = derive_rng("acc-curv")
        grid = 2.0 ** -10
        for _ in range(10_000):
            n = int(2 ** rng.integers(1, 7))  # power of two: exact division
            perturbed = (rng.integers(-(2**18), 2**18, size=n) * grid).tolist()
            original = float(rng.integers(-(2**18), 2**18)) * grid
            shift = float(rng.integers(-(2**18), 2**18)) * grid
            lam = 2.0 ** int(rng.integers(-5, 6))

            d = discrepancy(original, perturbed)
            assert discrepancy(original + shift, [p + shift for p in perturbed]) == d
            z = normalized_discrepancy(original, perturbed)
            z_scaled = normalized_discrepancy(lam * original, [lam * p for p in perturbed])
            assert z_scaled == z
            assert discrepancy(original, [original] * n) == 0.0


def test_perturbation_contract(tiny_filler):
    with criterion("Perturbation contract", budget_seconds=5):
        from fractions import Fraction

        from curvens.corpus import TextSample
        from test_perturb import _always_reachable

        filler_words = sorted(w for w in tiny_filler.vocab if not w.startswith("<"))
        rng = derive_rng("acc-perturb")
        for trial in range(1000):
            span = int(rng.integers(1, 4))
            buffer = int(rng.integers(0, 2))
            while True:
                W = int(rng.integers(span, 260))
                f = round(float(rng.uniform(0.05, 0.25)), 3)
                if _always_reachable(W, f, span, buffer):
                    break
            cfg = PerturbationConfig(span_length=span, mask_fraction=f,
                                     buffer=buffer, num_perturbations=1,
                                     seed=int(rng.integers(1 << 30)))
            target = max(1, math.ceil(Fraction(str(f)) * W))

            words = [filler_words[i % len(filler_words)] for i in range(W)]
            sample = TextSample(id=f"p{trial}", text=" ".join(words), label="human")
            spans = select_mask_spans(W, cfg, derive_rng(cfg.seed, sample.id, 1))
            masked = sum(length for _, length in spans)
            assert target <= masked < target + span
            last_end = None
            for start, length in spans:
                assert length == span and 0 <= start and start + length <= W
                if last_end is not None:
                    assert start - last_end >= buffer
                last_end = start + length

            pset = perturb_sample(sample, tiny_filler, cfg)
            rewritten = tokenize_words(pset.perturbed[0]).words
            assert len(rewritten) == W
            covered = {p for s, length in spans for p in range(s, s + length)}
            for pos in range(W):
                if pos not in covered:
                    assert rewritten[pos] == words[pos]


def test_learner_oracles():
    with criterion("Learner oracles", budget_seconds=30):
        rng = derive_rng("acc-learners")

        # GNB vs closed-form density product
        for _ in range(100):
            n, m = int(rng.integers(6, 24)), int(rng.integers(1, 4))
            X = rng.normal(size=(n, m))
            y = np.array([0, 1] * (n // 2) + [0] * (n % 2))
            model = fit_gnb(X, y, var_smoothing=1e-9)
            x = rng.normal(size=m)
            assert predict_proba(model, [x])[0] == pytest.approx(
                gnb_oracle(X, y, x, var_smoothing=1e-9), abs=1e-9
            )

        # LR analytic gradient vs central differences
        for _ in range(25):
            n, m = int(rng.integers(5, 16)), int(rng.integers(1, 4))
            X = rng.normal(size=(n, m))
            y = rng.integers(0, 2, size=n).astype(float)
            Xb = np.hstack([X, np.ones((n, 1))])
            theta = rng.normal(size=m + 1)
            reg = float(rng.uniform(0.0, 3.0))
            _, grad = loss_and_grad(theta, Xb, y, reg)
            eps = 1e-6
            for j in range(m + 1):
                e = np.zeros(m + 1)
                e[j] = eps
                hi, _ = loss_and_grad(theta + e, Xb, y, reg)
                lo, _ = loss_and_grad(theta - e, Xb, y, reg)
                numeric = (hi - lo) / (2 * eps)
                assert abs(grad[j] - numeric) / max(1.0, abs(numeric)) < 1e-5

        # single-tree no-bootstrap forest memorizes consistent data
        X = rng.normal(size=(60, 3))
        y = (X[:, 0] - 0.5 * X[:, 2] > 0).astype(int)
        tree = fit_random_forest(X, y, n_estimators=1, bootstrap=False, seed=1)
        p = predict_proba(tree, X)
        assert auroc(LabeledScores(tuple(p[y == 0]), tuple(p[y == 1]))) == 1.0

        # SVM separates a 20-point separable 2-D instance
        Xs = np.vstack([
            rng.normal(loc=(-2.0, -2.0), scale=0.5, size=(10, 2)),
            rng.normal(loc=(2.0, 2.0), scale=0.5, size=(10, 2)),
        ])
        ys = np.array([0] * 10 + [1] * 10)
        svm = fit_svm(Xs, ys, C=10.0, kernel="linear")
        ps = predict_proba(svm, Xs)
        assert auroc(LabeledScores(tuple(ps[ys == 0]), tuple(ps[ys == 1]))) == 1.0


def test_multistage_limits():
    with criterion("Multi-stage limits", budget_seconds=1):
        rng = derive_rng("acc-ms")
        labels = ["machine" if i % 2 else "human" for i in range(30)]
        d = rng.normal(size=(30, 3)) + np.array(
            [1.0 if lab == "machine" else 0.0 for lab in labels]
        )[:, None]
        from test_ensemble import make_matrix

        matrix = make_matrix(d, labels=labels, scorer_names=["big", "mid", "small"])
        complexity = {"big": 3, "mid": 2, "small": 1}

        never = fit_multistage(matrix, complexity, z_grid=[1000.0])
        scores = apply_ensemble(EnsembleMethod(kind="multistage"), matrix, trained=never)
        block = matrix.features(never.ordered_scorers, feature="d")
        assert scores == [statistics.fmean(row) for row in block]

        always = fit_multistage(matrix, complexity, z_grid=[-1000.0])
        scores = apply_ensemble(EnsembleMethod(kind="multistage"), matrix, trained=always)
        assert scores == list(matrix.column("big", feature="d"))

        hand = MultiStageModel(("big", "mid", "small"), (0.0,) * 3, (1.0,) * 3, (0.0,) * 3)
        assert multistage_score(hand, {"big": 4.0, "mid": -6.0, "small": 9.0}) == -1.0


@pytest.fixture(scope="module")
def offline_world():
    """Three bases (distinct orders, distinct corpus slices), one filler,
    and 100 held-out human samples from a shifted source."""
    vocab = make_vocab(120, seed=100)
    news = markov_chain(vocab, seed=101)
    human_chain = markov_chain(vocab, seed=202)
    slices = [
        make_corpus(news, n_samples=120, length=60, seed=300 + i, prefix=f"c{i}-")
        for i in range(3)
    ]
    bases = {
        name: train_ngram(part, order=order, k=0.2, name=name)
        for (name, order), part in zip((("uni", 1), ("bi", 2), ("tri", 3)), slices)
    }
    merged = Dataset(samples=tuple(s for part in slices for s in part), name="all")
    filler = train_ngram(merged, order=2, k=0.2, name="filler")
    human = make_corpus(human_chain, n_samples=100, length=80, seed=400,
                        prefix="h", name="eval")
    return bases, filler, human


# regression bounds frozen from the first seeded pilot of this configuration
MATCHED_BOUNDS = {"uni": 0.70, "bi": 0.95, "tri": 0.65}
PILOT_SEED = 1234


def test_end_to_end_offline_separation(offline_world):
    with criterion("End-to-end offline separation", budget_seconds=300):
        bases, filler, human = offline_world
        gen_cfg = GenerationConfig(prompt_tokens=30, max_tokens=60,
                                   temperature=1.0, seed=PILOT_SEED)
        pert_cfg = PerturbationConfig(span_length=2, mask_fraction=0.15,
                                      num_perturbations=16, buffer=1,
                                      seed=PILOT_SEED)
        scorers = list(bases.values())
        for name, base in bases.items():
            synthetic = make_synthetic_dataset(human, base, gen_cfg)
            assert sum(1 for s in synthetic if s.label == "machine") == 100
            sets = [perturb_sample(s, filler, pert_cfg) for s in synthetic]
            matrix = build_score_matrix(sets, scorers)

            matched = auroc_from_labels(
                matrix.labels,
                apply_ensemble(EnsembleMethod(kind="single", params={"scorer": name}),
                               matrix),
            )
            assert matched >= MATCHED_BOUNDS[name], (name, matched)

            reduced = exclude_scorer(matrix, name)
            ensemble_mean = auroc_from_labels(
                reduced.labels, apply_ensemble(EnsembleMethod(kind="mean"), reduced)
            )
            singles = [
                auroc_from_labels(
                    reduced.labels,
                    apply_ensemble(EnsembleMethod(kind="single", params={"scorer": s}),
                                   reduced),
                )
                for s in reduced.scorer_names
            ]
            assert ensemble_mean >= float(np.mean(singles)), (name, ensemble_mean, singles)


def test_experiment_determinism(offline_world, tmp_path):
    with criterion("Determinism", budget_seconds=600):
        bases, filler, human = offline_world
        model_paths = {}
        for name, model in bases.items():
            path = tmp_path / f"{name}.json"
            model.save(path)
            model_paths[name] = str(path)
        filler_path = tmp_path / "filler.json"
        filler.save(filler_path)
        human_small = Dataset(samples=human.samples[:30], name="eval")
        data_path = tmp_path / "humans.jsonl"
        save_jsonl(human_small, data_path)

        def spec(name):
            return {"name": name, "kind": "ngram",
                    "params": {"path": model_paths[name]}}

        config = {
            "datasets": [str(data_path)],
            "base_models": [spec("bi")],
            "scoring_models": [spec("uni"), spec("bi"), spec("tri")],
            "filler": {"name": "filler", "kind": "ngram",
                       "params": {"path": str(filler_path)}},
            "perturbation": {"num_perturbations": 6, "seed": 11},
            "generation": {"prompt_tokens": 30, "max_tokens": 40, "seed": 11},
            "methods": ["mean", "median", "max", "single:bi"],
            "exclude_base_from_scorers": False,
            "seed": 11,
        }
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config))

        outputs = []
        for run in ("run1", "run2"):
            out = tmp_path / run
            assert main(["experiment", "--config", str(cfg_path),
                         "--out", str(out)]) == 0
            outputs.append((out / "report.csv").read_bytes())
        assert outputs[0] == outputs[1]
