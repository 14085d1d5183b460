"""Model backends: teacher-forced scoring, pseudo-log-likelihood scoring,
seeded sentinel infilling with span-length coercion, and seeded generation."""
from __future__ import annotations

import hashlib
import re

import torch
from transformers import (
    AutoModelForCausalLM,
    AutoModelForMaskedLM,
    AutoModelForSeq2SeqLM,
    AutoTokenizer,
)

from .config import ModelEntry

MASK_RE = re.compile(r"<MASK:(\d+)>")

FILL_ATTEMPTS = 10


class BackendError(Exception):
    """Maps to an HTTP status + error message."""

    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _derive_seed(*parts) -> int:
    blob = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little") >> 1


_MODEL_CLASSES = {
    "causal": AutoModelForCausalLM,
    "masked": AutoModelForMaskedLM,
    "infill": AutoModelForSeq2SeqLM,
}


class LoadedModel:
    def __init__(self, name: str, entry: ModelEntry, device: str = "cpu",
                 max_batch: int = 8):
        self.name = name
        self.kind = entry.kind
        self.parameters = entry.parameters
        self.device = device
        self.max_batch = max_batch
        self.tokenizer = AutoTokenizer.from_pretrained(entry.checkpoint)
        self.model = _MODEL_CLASSES[entry.kind].from_pretrained(entry.checkpoint)
        self.model.to(device)
        self.model.eval()

    # -- limits -------------------------------------------------------------

    @property
    def max_length(self):
        for attr in ("max_position_embeddings", "n_positions"):
            value = getattr(self.model.config, attr, None)
            if isinstance(value, int) and 0 < value < 1_000_000:
                return value
        return None

    def _check_length(self, n_tokens: int):
        limit = self.max_length
        if limit is not None and n_tokens > limit:
            raise BackendError(
                413, f"text of {n_tokens} tokens exceeds {self.name}'s "
                     f"max length {limit}"
            )

    def _encode(self, text: str) -> list[int]:
        return self.tokenizer(text, add_special_tokens=False)["input_ids"]

    # -- scoring -------------------------------------------------------------

    @torch.no_grad()
    def logprob(self, text: str) -> tuple[float, int]:
        if self.kind == "causal":
            return self._causal_logprob(text)
        if self.kind == "masked":
            return self._pseudo_log_likelihood(text)
        raise BackendError(400, f"model {self.name} is an infilling model and "
                                "does not score texts")

    def _causal_logprob(self, text: str) -> tuple[float, int]:
        ids = self._encode(text)
        if not ids:
            raise BackendError(400, "text produced no tokens")
        bos = self.tokenizer.bos_token_id
        if bos is not None:
            full = [bos] + ids
            targets = ids
        else:
            full = ids
            targets = ids[1:]
        self._check_length(len(full))
        if not targets:
            return 0.0, 1
        input_ids = torch.tensor([full], device=self.device)
        logits = self.model(input_ids).logits[0]
        logprobs = torch.log_softmax(logits.float(), dim=-1)
        offset = len(full) - len(targets) - 1
        total = sum(
            logprobs[offset + i, tok].item() for i, tok in enumerate(targets)
        )
        return float(total), len(targets)

    def _pseudo_log_likelihood(self, text: str) -> tuple[float, int]:
        mask_id = self.tokenizer.mask_token_id
        if mask_id is None:
            raise BackendError(400, f"model {self.name} has no mask token")
        encoding = self.tokenizer(text, return_special_tokens_mask=True)
        ids = encoding["input_ids"]
        special = encoding["special_tokens_mask"]
        self._check_length(len(ids))
        positions = [i for i, s in enumerate(special) if not s]
        if not positions:
            raise BackendError(400, "text produced no scorable tokens")
        total = 0.0
        base = torch.tensor(ids, device=self.device)
        for start in range(0, len(positions), self.max_batch):
            chunk = positions[start : start + self.max_batch]
            batch = base.repeat(len(chunk), 1)
            for row, pos in enumerate(chunk):
                batch[row, pos] = mask_id
            logits = self.model(batch).logits.float()
            for row, pos in enumerate(chunk):
                logprobs = torch.log_softmax(logits[row, pos], dim=-1)
                total += logprobs[ids[pos]].item()
        return float(total), len(positions)

    # -- infilling -------------------------------------------------------------

    @torch.no_grad()
    def fill(self, masked_text: str, span_lengths: list[int], seed: int) -> str:
        if self.kind != "infill":
            raise BackendError(400, f"model {self.name} is not an infilling model")
        placeholders = MASK_RE.findall(masked_text)
        if [int(p) for p in placeholders] != list(span_lengths):
            raise BackendError(
                400, f"span_lengths {span_lengths} do not match the "
                     f"{len(placeholders)} placeholders in the text"
            )
        n_spans = len(span_lengths)
        sentinels = [f"<extra_id_{i}>" for i in range(n_spans)]
        sentinel_ids = self.tokenizer.convert_tokens_to_ids(sentinels)
        if any(i is None or i == self.tokenizer.unk_token_id for i in sentinel_ids):
            raise BackendError(400, f"model {self.name} supports at most the "
                                    "sentinel tokens it was trained with")
        source = masked_text
        for sentinel in sentinels:
            source = MASK_RE.sub(sentinel, source, count=1)
        enc = torch.tensor([self._encode(source)], device=self.device)
        self._check_length(enc.shape[1])

        budget = 4 * (sum(span_lengths) + n_spans) + 8
        spans: dict[int, list[str]] = {}
        fallback: dict[int, list[str]] = {}
        for attempt in range(FILL_ATTEMPTS):
            out = self._sample_seq2seq(enc, seed=_derive_seed(seed, attempt),
                                       max_steps=budget)
            parsed = self._parse_spans(out, n_spans)
            for i, words in parsed.items():
                fallback.setdefault(i, words)
                if i not in spans and len(words) == span_lengths[i]:
                    spans[i] = words
            if len(spans) == n_spans:
                break
        if len(spans) < n_spans:
            greedy = self._parse_spans(
                self._sample_seq2seq(enc, seed=0, max_steps=budget, greedy=True),
                n_spans,
            )
            for i in range(n_spans):
                if i in spans:
                    continue
                words = list(spans.get(i) or fallback.get(i) or greedy.get(i) or [])
                pad_source = greedy.get(i) or words or ["<pad>"]
                j = 0
                while len(words) < span_lengths[i]:
                    words.append(pad_source[min(j, len(pad_source) - 1)])
                    j += 1
                spans[i] = words[: span_lengths[i]]

        pieces = []
        cursor = 0
        for i, match in enumerate(MASK_RE.finditer(masked_text)):
            pieces.append(masked_text[cursor : match.start()])
            pieces.append(" ".join(spans[i]))
            cursor = match.end()
        pieces.append(masked_text[cursor:])
        return "".join(pieces)

    def _sample_seq2seq(self, enc_ids, seed: int, max_steps: int,
                        greedy: bool = False):
        start = self.model.config.decoder_start_token_id
        if start is None:
            start = self.tokenizer.pad_token_id
        eos = self.model.config.eos_token_id
        generator = torch.Generator(device="cpu").manual_seed(seed)
        decoder = torch.tensor([[start]], device=self.device)
        out = []
        for _ in range(max_steps):
            logits = self.model(input_ids=enc_ids, decoder_input_ids=decoder).logits
            step = logits[0, -1].float()
            if greedy:
                token = int(step.argmax())
            else:
                probs = torch.softmax(step, dim=-1)
                token = int(torch.multinomial(probs.cpu(), 1, generator=generator))
            if eos is not None and token == eos:
                break
            out.append(token)
            decoder = torch.cat(
                [decoder, torch.tensor([[token]], device=self.device)], dim=1
            )
        return out

    def _parse_spans(self, ids, n_spans: int) -> dict[int, list[str]]:
        sentinel_ids = {
            self.tokenizer.convert_tokens_to_ids(f"<extra_id_{i}>"): i
            for i in range(n_spans)
        }
        spans: dict[int, list[int]] = {}
        current = None
        for token in ids:
            if token in sentinel_ids:
                current = sentinel_ids[token]
                spans.setdefault(current, [])
            elif current is not None:
                spans[current].append(token)
        return {
            i: self.tokenizer.decode(toks, skip_special_tokens=True).split()
            for i, toks in spans.items()
        }

    # -- generation -------------------------------------------------------------

    @torch.no_grad()
    def generate(self, prompt: str, max_tokens: int, temperature: float,
                 seed: int) -> str:
        if self.kind != "causal":
            raise BackendError(400, f"model {self.name} is not a causal generator")
        ids = self._encode(prompt)
        if not ids:
            raise BackendError(400, "prompt produced no tokens")
        self._check_length(len(ids) + 1)
        limit = self.max_length
        eos = self.model.config.eos_token_id
        generator = torch.Generator(device="cpu").manual_seed(_derive_seed(seed))
        current = torch.tensor([ids], device=self.device)
        new_tokens = []
        for _ in range(max_tokens):
            if limit is not None and current.shape[1] >= limit:
                break
            logits = self.model(current).logits[0, -1].float()
            probs = torch.softmax(logits / temperature, dim=-1)
            token = int(torch.multinomial(probs.cpu(), 1, generator=generator))
            if eos is not None and token == eos:
                break
            new_tokens.append(token)
            current = torch.cat(
                [current, torch.tensor([[token]], device=self.device)], dim=1
            )
        if not new_tokens:
            return prompt
        continuation = self.tokenizer.decode(new_tokens, skip_special_tokens=True)
        if not continuation:
            return prompt
        if continuation[0].isspace() or prompt[-1].isspace():
            return prompt + continuation
        return prompt + " " + continuation
