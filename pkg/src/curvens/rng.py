"""Deterministic seed derivation for independent random sub-streams.

Child streams are keyed by hashing the parent seed together with string
tags (sample ids, perturbation indices, ...), so results do not depend on
scheduling or evaluation order.
"""
from __future__ import annotations

import hashlib

import numpy as np

_SEP = b"\x1f"


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a tuple of ints/strings."""
    blob = _SEP.join(str(p).encode("utf-8") for p in parts)
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


def derive_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
