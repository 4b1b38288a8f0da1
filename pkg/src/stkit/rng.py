"""Deterministic random streams.

Two stream kinds are used, both fully documented so sequences are
reproducible across runs and platforms:

* ``SplitMix64`` drives every integer draw that ends up in golden files
  (template choices in the forge). It is pure 64-bit integer math, so its
  output does not depend on numpy's version or the host libm.
* numpy ``Generator`` (PCG64) drives float initializations (embedding
  tables, packer weights). Identical seeds give identical byte sequences
  for a given numpy build; same-process and same-machine reruns are
  bit-identical.

Child streams are derived by hashing (seed, *key parts) with BLAKE2b, so
per-record streams are independent of processing order.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def derive_seed(seed: int, *parts: object, bits: int = 64) -> int:
    """Hash a root seed and arbitrary key parts into a fixed-width seed."""
    h = hashlib.blake2b(digest_size=bits // 8)
    for part in (seed, *parts):
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


class SplitMix64:
    """SplitMix64 generator (Steele et al. mixing constants).

    next_u64: state += 0x9E3779B97F4A7C15; z = state;
    z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
    z = (z ^ z>>27) * 0x94D049BB133111EB;
    return z ^ z>>31   (all mod 2^64)
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def randbelow(self, n: int) -> int:
        """Uniform draw in [0, n). Modulo bias is < n / 2**64, negligible
        for the template-sized n used here."""
        if n < 1:
            raise ValueError("randbelow requires n >= 1")
        return self.next_u64() % n


def record_stream(seed: int, record_id: object) -> SplitMix64:
    """Per-record SplitMix64 stream keyed by (seed, record id)."""
    return SplitMix64(derive_seed(seed, record_id))


def make_generator(seed: int, *parts: object) -> np.random.Generator:
    """Seeded PCG64 generator, optionally keyed by extra parts."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *parts, bits=128)))
