import math
from fractions import Fraction

import pytest

from curvens.corpus import TextSample, tokenize_words
from curvens.perturb import (
    PerturbationConfig,
    PerturbationError,
    PerturbationSet,
    mask_spans,
    mask_target,
    perturb_sample,
    read_perturbation_sets,
    select_mask_spans,
    write_perturbation_sets,
)
from curvens.rng import derive_rng


def exact_target(mask_fraction, word_count):
    """Decimal-intent ceiling, computed exactly."""
    return max(1, math.ceil(Fraction(str(mask_fraction)) * word_count))


def spans_ok(spans, cfg, word_count):
    last_end = None
    for start, length in spans:
        assert length == cfg.span_length
        assert 0 <= start and start + length <= word_count
        if last_end is not None:
            assert start - last_end >= cfg.buffer
        last_end = start + length


class TestConfig:
    def test_defaults_match_reference_settings(self):
        cfg = PerturbationConfig()
        assert (cfg.span_length, cfg.mask_fraction, cfg.num_perturbations) == (2, 0.15, 50)

    @pytest.mark.parametrize("bad", [
        {"span_length": 0},
        {"mask_fraction": 0.0},
        {"mask_fraction": 1.0},
        {"num_perturbations": 0},
        {"buffer": -1},
    ])
    def test_invalid_rejected(self, bad):
        with pytest.raises(ValueError):
            PerturbationConfig(**bad)


class TestSelectSpans:
    def test_twenty_words_default_config(self):
        # ceil(0.15 * 20) = 3 masked words; spans of 2 cross it at 2 spans
        cfg = PerturbationConfig()
        assert mask_target(20, cfg.mask_fraction) == 3
        spans = select_mask_spans(20, cfg, derive_rng(42))
        assert len(spans) == 2
        assert sum(length for _, length in spans) == 4
        spans_ok(spans, cfg, 20)

    def test_two_words_single_position(self):
        spans = select_mask_spans(2, PerturbationConfig(), derive_rng(0))
        assert spans == [(0, 2)]

    def test_too_short_errors(self):
        with pytest.raises(ValueError, match="too short"):
            select_mask_spans(1, PerturbationConfig(), derive_rng(0))

    def test_float_ceiling_is_decimal(self):
        # binary float 0.15 * 20 is a hair above 3; decimal intent says 3
        assert mask_target(20, 0.15) == 3
        assert mask_target(10, 0.3) == 3
        assert mask_target(7, 0.15) == 2  # ceil(1.05)

    def test_coverage_and_validity_over_random_draws(self):
        rng = derive_rng("draws")
        for trial in range(400):
            span = int(rng.integers(1, 4))
            buffer = int(rng.integers(0, 2))
            while True:
                word_count = int(rng.integers(span, 300))
                fraction = round(float(rng.uniform(0.05, 0.25)), 3)
                if _always_reachable(word_count, fraction, span, buffer):
                    break
            cfg = PerturbationConfig(span_length=span, mask_fraction=fraction,
                                     buffer=buffer)
            spans = select_mask_spans(word_count, cfg, derive_rng("t", trial))
            spans_ok(spans, cfg, word_count)
            masked = sum(length for _, length in spans)
            target = exact_target(fraction, word_count)
            assert target <= masked < target + span


def _always_reachable(word_count, fraction, span, buffer):
    """True when greedy random placement can never strand the mask target:
    each placed span blocks at most 2*(span+buffer)-1 start positions."""
    if word_count < span:
        return False
    target = exact_target(fraction, word_count)
    spans_needed = math.ceil(target / span)
    blocked = (spans_needed - 1) * (2 * (span + buffer) - 1)
    return blocked < word_count - span + 1


class TestPerturbSample:
    def test_fifty_rewrites_by_default(self, tiny_filler):
        text = " ".join(["the cat sat on the mat and the dog ran"] * 3)
        sample = TextSample(id="s", text=text, label="human")
        pset = perturb_sample(sample, tiny_filler, PerturbationConfig(seed=1))
        assert len(pset.perturbed) == 50

    def test_deterministic(self, tiny_filler):
        sample = TextSample(id="s", text="the cat sat on the mat and the dog ran off", label="human")
        cfg = PerturbationConfig(num_perturbations=8, seed=3)
        a = perturb_sample(sample, tiny_filler, cfg)
        b = perturb_sample(sample, tiny_filler, cfg)
        assert a.perturbed == b.perturbed

    def test_unmasked_words_preserved(self, tiny_filler):
        sample = TextSample(id="s", text="the cat sat on the mat and the dog ran off", label="human")
        cfg = PerturbationConfig(num_perturbations=20, seed=5)
        pset = perturb_sample(sample, tiny_filler, cfg)
        original = tokenize_words(sample.text).words
        for i, rewrite in enumerate(pset.perturbed, start=1):
            words = tokenize_words(rewrite).words
            assert len(words) == len(original)
            spans = select_mask_spans(len(original), cfg, derive_rng(cfg.seed, "s", i))
            masked_positions = {
                pos for start, length in spans for pos in range(start, start + length)
            }
            for pos, (got, want) in enumerate(zip(words, original)):
                if pos not in masked_positions:
                    assert got == want

    def test_rewrite_depends_only_on_index(self, tiny_filler):
        sample = TextSample(id="s", text="the cat sat on the mat and the dog ran off", label="human")
        short = perturb_sample(sample, tiny_filler,
                               PerturbationConfig(num_perturbations=3, seed=7))
        long = perturb_sample(sample, tiny_filler,
                              PerturbationConfig(num_perturbations=9, seed=7))
        assert long.perturbed[:3] == short.perturbed

    def test_too_short_annotated(self, tiny_filler):
        sample = TextSample(id="shorty", text="hi", label="human")
        with pytest.raises(PerturbationError, match="shorty"):
            perturb_sample(sample, tiny_filler, PerturbationConfig(span_length=5))

    def test_filler_errors_annotated(self):
        class BrokenFiller:
            name = "broken"

            def fill_masks(self, masked, seed):
                raise RuntimeError("boom")

        sample = TextSample(id="s9", text="one two three four five six", label="human")
        with pytest.raises(PerturbationError, match=r"s9.*perturbation 1"):
            perturb_sample(sample, BrokenFiller(), PerturbationConfig(num_perturbations=2))


class TestMaskSpans:
    def test_placeholder_replaces_span(self):
        tokens = tokenize_words("a b c d e")
        masked = mask_spans(tokens, [(1, 2)])
        assert masked.words == ("a", "<MASK:2>", "d", "e")

    def test_word_count_restored_after_fill(self, tiny_filler):
        tokens = tokenize_words("the cat sat on the mat")
        masked = mask_spans(tokens, [(0, 2), (4, 2)])
        filled = tiny_filler.fill_masks(masked, seed=0)
        assert len(filled.words) == 6


class TestPersistence:
    def test_round_trip(self, tmp_path, tiny_filler):
        samples = [
            TextSample(id=f"s{i}", text="the cat sat on the mat and the dog ran off",
                       label="human" if i % 2 else "machine",
                       source_model=None if i % 2 else "gen")
            for i in range(4)
        ]
        cfg = PerturbationConfig(num_perturbations=4, seed=2)
        sets = [perturb_sample(s, tiny_filler, cfg) for s in samples]
        path = tmp_path / "sets.jsonl"
        write_perturbation_sets(sets, path)
        back = read_perturbation_sets(path)
        assert len(back) == 4
        for orig, loaded in zip(sets, back):
            assert loaded.original == orig.original
            assert loaded.perturbed == orig.perturbed
            assert loaded.config == cfg
            assert loaded.filler_name == "tiny-filler"

    def test_word_count_invariant_enforced(self):
        sample = TextSample(id="s", text="one two three", label="human")
        with pytest.raises(ValueError, match="word count"):
            PerturbationSet(
                original=sample,
                perturbed=("one two",),
                config=PerturbationConfig(num_perturbations=1),
                filler_name="f",
            )
