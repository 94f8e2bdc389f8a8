"""Seed derivation so that independent work units get order-independent streams."""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def stable_hash(key) -> int:
    """64-bit hash that is stable across processes (unlike ``hash``)."""
    if isinstance(key, int):
        return key & MASK64
    data = str(key).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def derive_seed(seed: int, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed & MASK64, *(stable_hash(k) for k in keys)])


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Generator for the work unit identified by ``keys`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))
