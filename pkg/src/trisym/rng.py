"""Deterministic random streams.

All randomness in the library flows from a single 64-bit seed. Component
streams are derived from labeled keys ("mask", "init", "perm", ...) via a
counter-based Philox generator, so that adding draws to one component never
perturbs another.
"""
from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream", "fisher_yates"]


def stream(seed: int, label: str, *counters: int) -> np.random.Generator:
    """Return a fresh Generator for (seed, label, counters).

    The same arguments always yield the same stream; distinct labels or
    counters yield statistically independent streams. The Philox key packs
    the seed in one 64-bit word and a hash of (label, counters) in the other.
    """
    material = label.encode("utf-8") + b"".join(
        int(c).to_bytes(8, "little", signed=True) for c in counters
    )
    digest = hashlib.sha256(material).digest()
    key = np.array(
        [
            np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
            np.uint64(int.from_bytes(digest[:8], "little")),
        ],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def fisher_yates(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform permutation of range(n) by explicit Fisher-Yates swaps."""
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm
