"""Server configuration: which checkpoints to serve under which names."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

KINDS = ("causal", "masked", "infill")

# The default roster mirrors the sub-model combinations used in the
# experiments: three causal generators/scorers, two masked scorers, one
# infilling model. Parameter counts (complexity) ride along for clients.
PAPER_ROSTER = {
    "gpt-neo-125m": {"checkpoint": "EleutherAI/gpt-neo-125m", "kind": "causal",
                     "parameters": 125_000_000},
    "gpt2": {"checkpoint": "gpt2", "kind": "causal", "parameters": 124_000_000},
    "gpt2-medium": {"checkpoint": "gpt2-medium", "kind": "causal",
                    "parameters": 355_000_000},
    "bert-base-cased": {"checkpoint": "bert-base-cased", "kind": "masked",
                        "parameters": 110_000_000},
    "roberta-base": {"checkpoint": "roberta-base", "kind": "masked",
                     "parameters": 125_000_000},
    "t5-base": {"checkpoint": "t5-base", "kind": "infill",
                "parameters": 220_000_000},
}


@dataclass(frozen=True)
class ModelEntry:
    checkpoint: str
    kind: str
    parameters: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"model kind must be one of {KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class ServerConfig:
    models: dict[str, ModelEntry] = field(default_factory=dict)
    host: str = "127.0.0.1"
    port: int = 8111
    device: str = "cpu"
    max_batch: int = 8

    def __post_init__(self):
        if not self.models:
            raise ValueError("server config must list at least one model")
        if self.max_batch < 1:
            raise ValueError(f"max_batch must be >= 1, got {self.max_batch}")


def config_from_dict(raw: dict) -> ServerConfig:
    models = {
        name: ModelEntry(
            checkpoint=entry["checkpoint"],
            kind=entry["kind"],
            parameters=int(entry.get("parameters", 0)),
        )
        for name, entry in raw.get("models", {}).items()
    }
    return ServerConfig(
        models=models,
        host=raw.get("host", "127.0.0.1"),
        port=int(raw.get("port", 8111)),
        device=raw.get("device", "cpu"),
        max_batch=int(raw.get("max_batch", 8)),
    )


def load_config(path) -> ServerConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def paper_config(**overrides) -> ServerConfig:
    return config_from_dict({"models": PAPER_ROSTER, **overrides})
