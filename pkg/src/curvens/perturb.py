"""Random span masking and mask-filled rewrites of each sample."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

from .corpus import (
    DatasetError,
    TextSample,
    TokenizedText,
    detokenize,
    mask_placeholder,
    tokenize_words,
)
from .rng import derive_rng, derive_seed


class PerturbationError(RuntimeError):
    """A span-selection or filler failure, annotated with its sample context."""


@dataclass(frozen=True)
class PerturbationConfig:
    span_length: int = 2
    mask_fraction: float = 0.15
    num_perturbations: int = 50
    buffer: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.span_length < 1:
            raise ValueError(f"span_length must be >= 1, got {self.span_length}")
        if not 0 < self.mask_fraction < 1:
            raise ValueError(f"mask_fraction must be in (0,1), got {self.mask_fraction}")
        if self.num_perturbations < 1:
            raise ValueError(f"num_perturbations must be >= 1, got {self.num_perturbations}")
        if self.buffer < 0:
            raise ValueError(f"buffer must be >= 0, got {self.buffer}")


@dataclass(frozen=True)
class PerturbationSet:
    """An original sample plus its N mask-and-fill rewrites."""

    original: TextSample
    perturbed: tuple[str, ...]
    config: PerturbationConfig
    filler_name: str

    def __post_init__(self):
        object.__setattr__(self, "perturbed", tuple(self.perturbed))
        if len(self.perturbed) != self.config.num_perturbations:
            raise ValueError(
                f"sample {self.original.id!r}: expected "
                f"{self.config.num_perturbations} rewrites, got {len(self.perturbed)}"
            )
        n_words = len(tokenize_words(self.original.text).words)
        for i, text in enumerate(self.perturbed, start=1):
            n = len(tokenize_words(text).words)
            if n != n_words:
                raise ValueError(
                    f"sample {self.original.id!r} rewrite {i}: word count {n} != {n_words}"
                )


def mask_target(word_count: int, mask_fraction: float) -> int:
    """Words to mask: ceil(fraction * W), computed with decimal intent.

    The 1e-9 slack keeps binary float error (e.g. 0.15 * 20 -> 3.0000000000000004)
    from bumping the ceiling to the next integer.
    """
    return max(1, math.ceil(mask_fraction * word_count - 1e-9))


def select_mask_spans(word_count: int, cfg: PerturbationConfig, rng) -> list[tuple[int, int]]:
    """Draw non-overlapping spans until the mask target is crossed.

    Spans have fixed length cfg.span_length, are pairwise separated by at
    least cfg.buffer words, and start positions are picked uniformly among
    the positions still valid. Stops early if no valid position remains.
    Returns spans sorted by start.
    """
    L = cfg.span_length
    if word_count < L:
        raise ValueError(f"text too short to perturb: {word_count} words < span length {L}")
    target = mask_target(word_count, cfg.mask_fraction)
    valid = list(range(word_count - L + 1))
    spans = []
    masked = 0
    while masked < target and valid:
        start = valid[int(rng.integers(len(valid)))]
        spans.append((start, L))
        masked += L
        lo = start - L - cfg.buffer + 1
        hi = start + L + cfg.buffer - 1
        valid = [p for p in valid if p < lo or p > hi]
    return sorted(spans)


def mask_spans(tokens: TokenizedText, spans) -> TokenizedText:
    """Replace each (start, length) span of words with one placeholder word."""
    words = list(tokens.words)
    seps = list(tokens.separators)
    for start, length in sorted(spans, reverse=True):
        words[start : start + length] = [mask_placeholder(length)]
        del seps[start + 1 : start + length]
    return TokenizedText(words=tuple(words), separators=tuple(seps))


def perturb_sample(sample: TextSample, filler, cfg: PerturbationConfig) -> PerturbationSet:
    """Produce the N rewrites of one sample with derived per-rewrite RNG streams.

    Rewrite i depends only on (cfg.seed, sample.id, i), never on the other
    rewrites, so requests can be reordered or parallelized freely.
    """
    tokens = tokenize_words(sample.text)
    if len(tokens.words) < cfg.span_length:
        raise PerturbationError(
            f"sample {sample.id!r}: text too short to perturb "
            f"({len(tokens.words)} words < span length {cfg.span_length})"
        )
    rewrites = []
    for i in range(1, cfg.num_perturbations + 1):
        try:
            spans = select_mask_spans(len(tokens.words), cfg, derive_rng(cfg.seed, sample.id, i))
            masked = mask_spans(tokens, spans)
            filled = filler.fill_masks(masked, seed=derive_seed(cfg.seed, sample.id, i))
            rewrites.append(detokenize(filled))
        except Exception as e:
            raise PerturbationError(f"sample {sample.id!r} perturbation {i}: {e}") from e
    return PerturbationSet(
        original=sample,
        perturbed=tuple(rewrites),
        config=cfg,
        filler_name=getattr(filler, "name", filler.__class__.__name__),
    )


def write_perturbation_sets(sets, path) -> None:
    """Persist one JSON object per sample so one perturbation pass serves all scorers."""
    with open(path, "w", encoding="utf-8") as fh:
        for pset in sets:
            record = {
                "id": pset.original.id,
                "original": pset.original.text,
                "perturbed": list(pset.perturbed),
                "config": asdict(pset.config),
                "filler": pset.filler_name,
                "label": pset.original.label,
            }
            if pset.original.source_model is not None:
                record["source_model"] = pset.original.source_model
            if pset.original.dataset is not None:
                record["dataset"] = pset.original.dataset
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_perturbation_sets(path) -> list[PerturbationSet]:
    sets = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{path}: line {lineno}: malformed JSON ({e.msg})") from None
            if "label" not in record:
                raise DatasetError(
                    f"{path}: line {lineno}: no 'label' field; scoring needs labeled samples"
                )
            sample = TextSample(
                id=str(record["id"]),
                text=record["original"],
                label=record["label"],
                source_model=record.get("source_model"),
                dataset=record.get("dataset"),
            )
            sets.append(
                PerturbationSet(
                    original=sample,
                    perturbed=tuple(record["perturbed"]),
                    config=PerturbationConfig(**record["config"]),
                    filler_name=record["filler"],
                )
            )
    return sets
