"""Seed splitting shared by every stochastic component.

``child = mix_seed(master, index)`` applies the SplitMix64 finaliser to
``master + (index + 1) * 0x9E3779B97F4A7C15`` (mod 2**64).  Children of
different indices are decorrelated streams; nesting (``mix_seed(mix_seed(s,
i), j)``) gives per-job, per-item seeds without any wall-clock entropy.
"""
from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def mix_seed(master: int, index: int) -> int:
    return splitmix64((int(master) + (int(index) + 1) * _GOLDEN) & _MASK)


def rng_for(master: int, *path: int) -> np.random.Generator:
    """Generator for the stream addressed by ``path`` under ``master``."""
    seed = int(master) & _MASK
    for p in path:
        seed = mix_seed(seed, p)
    return np.random.default_rng(seed)


def stable_tag(text: str) -> int:
    """Deterministic 32-bit integer for a string label (FNV-1a)."""
    h = 0x811C9DC5
    for b in text.encode("utf-8"):
        h = ((h ^ b) * 0x01000193) & 0xFFFFFFFF
    return h
