"""Language-model backends: score, fill masks, and generate.

Two implementations share one duck-typed surface (``name``, ``log_prob``,
``fill_masks``, ``generate``): the built-in add-k smoothed word n-gram model
defined here, and the HTTP client in :mod:`curvens.remote`.
"""
from __future__ import annotations

import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import Dataset, TokenizedText, placeholder_span_length, tokenize_words
from .rng import derive_rng

UNK = "<unk>"
EOT = "<eot>"
BOT = "<bot>"

NGRAM_FORMAT = "curvens-ngram-v1"

ENDPOINT_ENV = "CURVENS_MODEL_SERVER"


@dataclass(frozen=True)
class ModelSpec:
    """Declared model: how to build it and how complex it is.

    ``complexity`` is the parameter-count proxy used to order sub-models in
    the multi-stage estimator (vocab size x order for n-gram models, declared
    parameter count for remote ones).
    """

    name: str
    kind: str  # "ngram" | "remote"
    params: dict = field(default_factory=dict)
    complexity: int = 0

    def __post_init__(self):
        if self.kind not in ("ngram", "remote"):
            raise ValueError(f"unknown model kind: {self.kind!r}")


@dataclass(frozen=True)
class LogProbResult:
    total_logprob: float
    token_count: int

    def __post_init__(self):
        if self.token_count < 1:
            raise ValueError(f"token_count must be >= 1, got {self.token_count}")


class NgramModel:
    """Add-k smoothed word n-gram model over whitespace tokens.

    An end-of-text token is appended for training and scoring, so generation
    can terminate and the model is a proper distribution over variable-length
    strings; ``token_count`` includes it. Words seen fewer than ``min_count``
    times collapse to the UNK token. All operations are pure functions of
    (model, input, seed).
    """

    def __init__(self, order, k, counts, totals, vocab, name="ngram", min_count=1):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        if k <= 0:
            raise ValueError(f"smoothing k must be > 0, got {k}")
        self.name = name
        self.order = order
        self.k = float(k)
        self.min_count = min_count
        self.vocab = frozenset(vocab) | {UNK, EOT}
        self._counts = counts  # context tuple -> {token: count}
        self._totals = totals  # context tuple -> total count
        self._vocab_list = sorted(self.vocab)
        self._vocab_index = {t: i for i, t in enumerate(self._vocab_list)}
        # word types the filler may emit: surface forms only
        self._fill_candidates = [t for t in self._vocab_list if t not in (EOT, UNK)]

    @property
    def complexity(self) -> int:
        return len(self.vocab) * self.order

    # -- scoring ---------------------------------------------------------

    def map_token(self, word: str) -> str:
        return word if word in self.vocab else UNK

    def prob(self, token: str, context: tuple) -> float:
        """P(token | context) with add-k smoothing; positive for all vocab tokens."""
        counts = self._counts.get(context)
        c = counts.get(token, 0) if counts else 0
        total = self._totals.get(context, 0)
        return (c + self.k) / (total + self.k * len(self.vocab))

    def _contexts(self, mapped_tokens):
        ctx = (BOT,) * (self.order - 1)
        for tok in mapped_tokens:
            yield tok, ctx
            if self.order > 1:
                ctx = ctx[1:] + (tok,)

    def log_prob(self, text: str) -> LogProbResult:
        words = tokenize_words(text).words
        if not words:
            raise ValueError("cannot score empty text")
        mapped = [self.map_token(w) for w in words] + [EOT]
        total = 0.0
        for tok, ctx in self._contexts(mapped):
            total += math.log(self.prob(tok, ctx))
        return LogProbResult(total_logprob=total, token_count=len(mapped))

    # -- sampling --------------------------------------------------------

    def _distribution(self, context, candidates=None, temperature=1.0):
        tokens = candidates if candidates is not None else self._vocab_list
        probs = np.array([self.prob(t, context) for t in tokens])
        if temperature != 1.0:
            logits = np.log(probs) / temperature
            logits -= logits.max()
            probs = np.exp(logits)
        return probs / probs.sum()

    def fill_masks(self, masked: TokenizedText, seed: int) -> TokenizedText:
        """Replace each placeholder with span-length words sampled left to right.

        Each word is drawn from P(. | preceding context); EOT and UNK are not
        surface forms and are excluded from the draw.
        """
        if not any(placeholder_span_length(w) is not None for w in masked.words):
            raise ValueError("masked text contains no placeholders")
        if not self._fill_candidates:
            raise ValueError("model vocabulary has no word types to fill with")
        rng = derive_rng("fill", seed)
        ctx = (BOT,) * (self.order - 1)
        out_words = []
        out_seps = [masked.separators[0]]

        def push(word, sep):
            nonlocal ctx
            out_words.append(word)
            out_seps.append(sep)
            if self.order > 1:
                ctx = ctx[1:] + (self.map_token(word),)

        for word, sep in zip(masked.words, masked.separators[1:]):
            span = placeholder_span_length(word)
            if span is None:
                push(word, sep)
                continue
            for j in range(span):
                probs = self._distribution(ctx, candidates=self._fill_candidates)
                choice = self._fill_candidates[rng.choice(len(self._fill_candidates), p=probs)]
                push(choice, " " if j < span - 1 else sep)
        return TokenizedText(words=tuple(out_words), separators=tuple(out_seps))

    def generate(self, prompt: str, max_tokens: int, temperature: float, seed: int) -> str:
        """Sample a continuation; stops early at end-of-text. Deterministic per seed."""
        if max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {max_tokens}")
        if temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {temperature}")
        rng = derive_rng("generate", seed)
        mapped = [self.map_token(w) for w in tokenize_words(prompt).words]
        ctx = (BOT,) * (self.order - 1)
        for tok in mapped:
            if self.order > 1:
                ctx = ctx[1:] + (tok,)
        new_words = []
        for _ in range(max_tokens):
            probs = self._distribution(ctx, temperature=temperature)
            choice = self._vocab_list[rng.choice(len(self._vocab_list), p=probs)]
            if choice == EOT:
                break
            new_words.append(choice)
            if self.order > 1:
                ctx = ctx[1:] + (choice,)
        if not new_words:
            return prompt
        sep = "" if (not prompt or prompt[-1].isspace()) else " "
        return prompt + sep + " ".join(new_words)

    # -- persistence -----------------------------------------------------

    def save(self, path) -> None:
        counts = {" ".join(ctx): dict(sorted(toks.items())) for ctx, toks in self._counts.items()}
        payload = {
            "format": NGRAM_FORMAT,
            "name": self.name,
            "order": self.order,
            "k": self.k,
            "min_count": self.min_count,
            "vocab": sorted(self.vocab),
            "counts": counts,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, ensure_ascii=False)

    @classmethod
    def load(cls, path) -> "NgramModel":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != NGRAM_FORMAT:
            raise ValueError(f"{path}: not a {NGRAM_FORMAT} file")
        counts = {}
        totals = {}
        for key, toks in payload["counts"].items():
            ctx = tuple(key.split(" ")) if key else ()
            counts[ctx] = {t: int(c) for t, c in toks.items()}
            totals[ctx] = sum(counts[ctx].values())
        return cls(
            order=payload["order"],
            k=payload["k"],
            counts=counts,
            totals=totals,
            vocab=payload["vocab"],
            name=payload.get("name", "ngram"),
            min_count=payload.get("min_count", 1),
        )


def train_ngram(corpus: Dataset, order: int, k: float, min_count: int = 1,
                name: str = "ngram") -> NgramModel:
    """Count word n-grams over the corpus with (order-1) begin-of-text padding."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if k <= 0:
        raise ValueError(f"smoothing k must be > 0, got {k}")
    if len(corpus) == 0:
        raise ValueError("cannot train on an empty corpus")

    word_freq = Counter()
    tokenized = []
    for sample in corpus:
        words = tokenize_words(sample.text).words
        word_freq.update(words)
        tokenized.append(words)

    vocab = {w for w, c in word_freq.items() if c >= min_count} | {UNK, EOT}

    counts: dict[tuple, dict] = {}
    totals: dict[tuple, int] = {}
    for words in tokenized:
        mapped = [w if w in vocab else UNK for w in words] + [EOT]
        ctx = (BOT,) * (order - 1)
        for tok in mapped:
            bucket = counts.setdefault(ctx, {})
            bucket[tok] = bucket.get(tok, 0) + 1
            totals[ctx] = totals.get(ctx, 0) + 1
            if order > 1:
                ctx = ctx[1:] + (tok,)
    return NgramModel(order=order, k=k, counts=counts, totals=totals,
                      vocab=vocab, name=name, min_count=min_count)


def build_model(spec: ModelSpec):
    """Construct a scorer/filler/generator from its spec.

    ngram params: {"path": <model file>} or
                  {"corpus": <jsonl>, "order": n, "k": k, "min_count": m}.
    remote params: {"model": <served name>, "endpoint": <url>, "timeout": s};
                   endpoint falls back to $CURVENS_MODEL_SERVER.
    """
    if spec.kind == "ngram":
        if "path" in spec.params:
            model = NgramModel.load(spec.params["path"])
            model.name = spec.name
            return model
        if "corpus" in spec.params:
            from .corpus import load_jsonl

            return train_ngram(
                load_jsonl(spec.params["corpus"]),
                order=int(spec.params.get("order", 2)),
                k=float(spec.params.get("k", 1.0)),
                min_count=int(spec.params.get("min_count", 1)),
                name=spec.name,
            )
        raise ValueError(f"ngram spec {spec.name!r} needs 'path' or 'corpus' in params")
    if spec.kind == "remote":
        from .remote import RemoteModel

        endpoint = spec.params.get("endpoint") or os.environ.get(ENDPOINT_ENV)
        if not endpoint:
            raise ValueError(
                f"remote spec {spec.name!r} needs an 'endpoint' (or ${ENDPOINT_ENV})"
            )
        return RemoteModel(
            endpoint=endpoint,
            model=spec.params.get("model", spec.name),
            name=spec.name,
            timeout=float(spec.params.get("timeout", 60.0)),
        )
    raise ValueError(f"unknown model kind: {spec.kind!r}")


def spec_complexity(spec: ModelSpec):
    """Complexity for multi-stage ordering; builds ngram models when undeclared."""
    if spec.complexity > 0:
        return spec.complexity
    if spec.kind == "ngram":
        return build_model(spec).complexity
    raise ValueError(f"remote spec {spec.name!r} must declare a complexity > 0")
