"""Stable seeding helpers: the same inputs give the same stream on any platform."""

from __future__ import annotations

import hashlib

import numpy as np


def stable_seed(*parts) -> int:
    """Derive a 63-bit seed from arbitrary parts via sha256."""
    text = "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFFFFFFFFFFFFFF


def stable_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(stable_seed(*parts))
