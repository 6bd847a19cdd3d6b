"""Seeded, platform-stable random streams.

Every random draw in harlab comes from a PCG64 generator (PCG XSL RR
128/64: 128-bit LCG state, multiplier 0x2360ed051fc65da44385df649fccf645,
xorshift-low + random-rotate output) whose stream seed is derived from a
user seed plus a structured key via SplitMix64 mixing.  Both algorithms
are fully specified by their constants, so any implementation of them
reproduces the exact byte streams; the host language's default seeded RNG
is never used.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# SplitMix64 constants (Steele, Lea & Flood 2014).
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(x: int) -> int:
    """One SplitMix64 step: advance by the golden-gamma and finalize."""
    x = (x + _GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & MASK64
    return x ^ (x >> 31)


def stream_seed(seed: int, *key: int | str) -> int:
    """Derive a 64-bit stream seed from a base seed and a structured key.

    Integers are folded directly; strings are folded byte by byte, so
    distinct labels ("init", "shuffle", ...) yield unrelated streams.
    """
    h = splitmix64(seed & MASK64)
    for part in key:
        if isinstance(part, str):
            for byte in part.encode("utf-8"):
                h = splitmix64(h ^ byte)
        else:
            h = splitmix64(h ^ (int(part) & MASK64))
    return h


def make_rng(seed: int, *key: int | str) -> np.random.Generator:
    """PCG64 generator for the (seed, key) stream."""
    return np.random.Generator(np.random.PCG64(stream_seed(seed, *key)))
