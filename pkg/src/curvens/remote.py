"""HTTP client for a model server speaking the curvens wire protocol.

Endpoints: POST /v1/logprob, /v1/fill, /v1/generate; GET /v1/models.
Remote log-probs are treated as opaque totals (masked-LM servers may return
pseudo-log-likelihoods); validation here is shape and finiteness only.
"""
from __future__ import annotations

import math
import threading

import requests

from .corpus import TokenizedText, detokenize, placeholder_span_length, tokenize_words
from .lm import LogProbResult


class TransportError(RuntimeError):
    """Server unreachable, timed out, or returned a transport-level failure."""

    def __init__(self, message, endpoint, model):
        super().__init__(f"{message} (endpoint={endpoint}, model={model})")
        self.endpoint = endpoint
        self.model = model


class ProtocolError(RuntimeError):
    """Server answered, but the payload violates the wire contract."""


class RemoteModel:
    """Client for one served model; separate HTTP session per thread."""

    def __init__(self, endpoint: str, model: str, name: str | None = None,
                 timeout: float = 60.0):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.name = name or model
        self.timeout = timeout
        self._local = threading.local()

    def _session(self) -> requests.Session:
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.endpoint}{path}"
        try:
            response = self._session().post(url, json=payload, timeout=self.timeout)
        except requests.RequestException as e:
            raise TransportError(str(e), self.endpoint, self.model) from e
        if response.status_code != 200:
            try:
                message = response.json().get("error", response.text)
            except ValueError:
                message = response.text
            raise TransportError(
                f"HTTP {response.status_code}: {message}", self.endpoint, self.model
            )
        try:
            return response.json()
        except ValueError as e:
            raise ProtocolError(f"{url}: non-JSON response body") from e

    # -- scorer ------------------------------------------------------------

    def log_prob(self, text: str) -> LogProbResult:
        return self.log_prob_batch([text])[0]

    def log_prob_batch(self, texts) -> list[LogProbResult]:
        texts = list(texts)
        if not texts or any(not t for t in texts):
            raise ValueError("texts must be non-empty")
        body = self._post("/v1/logprob", {"model": self.model, "texts": texts})
        logprobs = body.get("logprobs")
        counts = body.get("token_counts")
        if not isinstance(logprobs, list) or not isinstance(counts, list) \
                or len(logprobs) != len(texts) or len(counts) != len(texts):
            raise ProtocolError(f"logprob response shape mismatch: {body}")
        out = []
        for lp, tc in zip(logprobs, counts):
            if not isinstance(lp, (int, float)) or not math.isfinite(lp):
                raise ProtocolError(f"non-finite logprob from {self.model}: {lp}")
            out.append(LogProbResult(total_logprob=float(lp), token_count=int(tc)))
        return out

    # -- filler --------------------------------------------------------------

    def fill_masks(self, masked: TokenizedText, seed: int) -> TokenizedText:
        span_lengths = [
            s for s in (placeholder_span_length(w) for w in masked.words) if s is not None
        ]
        if not span_lengths:
            raise ValueError("masked text contains no placeholders")
        body = self._post("/v1/fill", {
            "model": self.model,
            "masked_text": detokenize(masked),
            "span_lengths": span_lengths,
            "seed": seed,
        })
        filled_text = body.get("filled_text")
        if not isinstance(filled_text, str):
            raise ProtocolError(f"fill response missing filled_text: {body}")
        filled = tokenize_words(filled_text)
        expected = len(masked.words) - len(span_lengths) + sum(span_lengths)
        if len(filled.words) != expected:
            raise ProtocolError(
                f"filler returned {len(filled.words)} words, expected {expected}"
            )
        if any(placeholder_span_length(w) is not None for w in filled.words):
            raise ProtocolError("filler left placeholders in the text")
        cursor = 0
        for word in masked.words:
            span = placeholder_span_length(word)
            if span is not None:
                cursor += span
                continue
            if filled.words[cursor] != word:
                raise ProtocolError(
                    f"filler changed an unmasked word at position {cursor}: "
                    f"{word!r} -> {filled.words[cursor]!r}"
                )
            cursor += 1
        return filled

    # -- generator -------------------------------------------------------------

    def generate(self, prompt: str, max_tokens: int, temperature: float,
                 seed: int) -> str:
        if max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {max_tokens}")
        if temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {temperature}")
        body = self._post("/v1/generate", {
            "model": self.model,
            "prompt": prompt,
            "max_tokens": max_tokens,
            "temperature": temperature,
            "seed": seed,
        })
        text = body.get("text")
        if not isinstance(text, str):
            raise ProtocolError(f"generate response missing text: {body}")
        return text

    def list_models(self) -> list[dict]:
        url = f"{self.endpoint}/v1/models"
        try:
            response = self._session().get(url, timeout=self.timeout)
        except requests.RequestException as e:
            raise TransportError(str(e), self.endpoint, self.model) from e
        if response.status_code != 200:
            raise TransportError(f"HTTP {response.status_code}", self.endpoint, self.model)
        return response.json().get("models", [])
