"""Deterministic content embeddings used by all reference backends.

The generator is fully pinned so independent implementations agree bitwise:

1. Hash the key bytes with 64-bit FNV-1a
   (offset basis 0xcbf29ce484222325, prime 0x100000001b3).
2. Use the hash as the state of a splitmix64 stream
   (increment 0x9e3779b97f4a7c15, mix constants 0xbf58476d1ce4e5b9 and
   0x94d049bb133111eb, shifts 30/27/31).
3. For each of the C components draw four uniforms u = word / 2**64 and
   take z = u1+u2+u3+u4 - 2.0 (an Irwin-Hall approximation of a normal;
   it avoids libm transcendentals so results match across platforms).
4. L2-normalize with a correctly-rounded sum of squares (math.fsum).

Identical key => bitwise-identical vector across runs, processes and
platforms; every vector has unit norm.
"""

from __future__ import annotations

import math
import re

import numpy as np

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_SPLITMIX_INC = 0x9E3779B97F4A7C15
_TWO64 = float(1 << 64)


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


class _SplitMix64:
    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _SPLITMIX_INC) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


def hashed_vector(key: bytes, c: int) -> np.ndarray:
    """Unit-norm float64 vector of length ``c`` derived from ``key``.

    Raises ValueError for c < 2 (a 1-dim "embedding" is degenerate and
    almost certainly a configuration mistake).
    """
    if c < 2:
        raise ValueError(f"embedding width must be >= 2, got {c}")
    if isinstance(key, str):
        key = key.encode("utf-8")
    rng = _SplitMix64(fnv1a64(key))
    values = []
    for _ in range(c):
        z = (
            rng.next_u64() / _TWO64
            + rng.next_u64() / _TWO64
            + rng.next_u64() / _TWO64
            + rng.next_u64() / _TWO64
        ) - 2.0
        values.append(z)
    norm = math.sqrt(math.fsum(v * v for v in values))
    if norm == 0.0:  # unreachable in practice; keep the contract total
        values[0] = 1.0
        norm = 1.0
    return np.array([v / norm for v in values], dtype=np.float64)


_TOKEN_RE = re.compile(r"[a-z0-9']+")


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens; the shared convention for question
    encoding and the instruction gate."""
    return _TOKEN_RE.findall(text.lower())


def token_key(token: str) -> bytes:
    return b"tok\x00" + token.encode("utf-8")


def cell_key(r: int, g: int, b: int) -> bytes:
    return b"rgb\x00" + bytes((r, g, b))
