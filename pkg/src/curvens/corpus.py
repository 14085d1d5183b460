"""Labeled text datasets, JSONL ingestion, and reversible word tokenization."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass

LABEL_HUMAN = "human"
LABEL_MACHINE = "machine"
LABELS = (LABEL_HUMAN, LABEL_MACHINE)

# Mask placeholders stand in for a span of words awaiting infilling.
# A placeholder is itself a single "word" (no whitespace), e.g. "<MASK:2>".
_MASK_RE = re.compile(r"^<MASK:(\d+)>$")


class DatasetError(ValueError):
    """Malformed dataset file or invalid sample."""


def mask_placeholder(span_length: int) -> str:
    if span_length < 1:
        raise ValueError(f"span length must be >= 1, got {span_length}")
    return f"<MASK:{span_length}>"


def placeholder_span_length(word: str):
    """Span length recorded in a mask placeholder, or None for ordinary words."""
    m = _MASK_RE.match(word)
    return int(m.group(1)) if m else None


@dataclass(frozen=True)
class TextSample:
    """One labeled candidate text."""

    id: str
    text: str
    label: str
    source_model: str | None = None
    dataset: str | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise DatasetError(f"sample {self.id!r}: text is empty")
        if self.label not in LABELS:
            raise DatasetError(
                f"sample {self.id!r}: label must be one of {LABELS}, got {self.label!r}"
            )


@dataclass(frozen=True)
class TokenizedText:
    """Word-level view of a string that reconstructs it byte-for-byte.

    separators[i] is the whitespace run before words[i]; separators[-1]
    trails the last word, so len(separators) == len(words) + 1.
    """

    words: tuple[str, ...]
    separators: tuple[str, ...]

    def __post_init__(self):
        if len(self.separators) != len(self.words) + 1:
            raise ValueError(
                f"need {len(self.words) + 1} separators for {len(self.words)} words, "
                f"got {len(self.separators)}"
            )


@dataclass(frozen=True)
class Dataset:
    samples: tuple[TextSample, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise DatasetError(f"duplicate id: {s.id}")
            seen.add(s.id)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


def tokenize_words(text: str) -> TokenizedText:
    """Split into maximal non-whitespace runs, keeping the whitespace between them."""
    parts = re.split(r"(\S+)", text)
    return TokenizedText(words=tuple(parts[1::2]), separators=tuple(parts[::2]))


def detokenize(t: TokenizedText) -> str:
    """Exact inverse of tokenize_words."""
    out = [t.separators[0]]
    for word, sep in zip(t.words, t.separators[1:]):
        out.append(word)
        out.append(sep)
    return "".join(out)


def sample_from_record(record: dict) -> TextSample:
    try:
        return TextSample(
            id=str(record["id"]),
            text=record["text"],
            label=record["label"],
            source_model=record.get("source_model"),
            dataset=record.get("dataset"),
        )
    except KeyError as e:
        raise DatasetError(f"missing field {e.args[0]!r}") from None


def load_jsonl(path) -> Dataset:
    """Load a dataset from a UTF-8 JSONL file, one sample object per line.

    Preserves line order. Unknown fields are ignored; blank lines are skipped.
    """
    samples = []
    name = _dataset_name(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{path}: line {lineno}: malformed JSON ({e.msg})") from None
            if not isinstance(record, dict):
                raise DatasetError(f"{path}: line {lineno}: expected a JSON object")
            try:
                samples.append(sample_from_record(record))
            except DatasetError as e:
                raise DatasetError(f"{path}: line {lineno}: {e}") from None
    return Dataset(samples=tuple(samples), name=name)


def save_jsonl(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in dataset:
            record = {"id": s.id, "text": s.text, "label": s.label}
            if s.source_model is not None:
                record["source_model"] = s.source_model
            if s.dataset is not None:
                record["dataset"] = s.dataset
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def _dataset_name(path) -> str:
    stem = str(path).rsplit("/", 1)[-1]
    return stem[:-6] if stem.endswith(".jsonl") else stem
