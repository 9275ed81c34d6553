"""Deterministic seed derivation.

Every stochastic stage (shuffling, augmentation, weight init, dropout) draws
its seed from the run seed through this mixer, so independent stages never
share a stream and runs replay exactly from (seed, epoch) alone.
"""

from __future__ import annotations

import hashlib

_MASK = (1 << 64) - 1

# Salt constants for the independent random streams of a run.
SALT_SHUFFLE = 1
SALT_TORCH = 2
SALT_INIT = 3
SALT_AUGMENT = 4


def derive_seed(*parts: int | str) -> int:
    """Mix integer/string parts into a 31-bit seed (splitmix64-style).

    Stable across platforms and processes, unlike built-in ``hash``.
    """
    x = 0x9E3779B97F4A7C15
    for part in parts:
        if isinstance(part, str):
            digest = hashlib.sha256(part.encode("utf-8")).digest()
            p = int.from_bytes(digest[:8], "little")
        else:
            p = int(part) & _MASK
        x = (x ^ p) & _MASK
        x = (x * 0xBF58476D1CE4E5B9) & _MASK
        x ^= x >> 27
        x = (x * 0x94D049BB133111EB) & _MASK
        x ^= x >> 31
    return x & 0x7FFFFFFF
