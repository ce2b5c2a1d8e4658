"""Deterministic counter-based random streams.

Philox (4x64, 256-bit counter) behind numpy's Generator API: identical seeds
produce identical streams on every platform, and labeled child streams are
derived by hashing so any component can own an independent stream without
coordinating draw order with the rest of the program.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_key(label) -> int:
    if isinstance(label, int):
        return label & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class Rng:
    """Seedable stream with labeled sub-stream derivation."""

    def __init__(self, seed: int, _path=()):
        self.seed = int(seed)
        self._path = tuple(_path)
        ss = np.random.SeedSequence([self.seed, *self._path])
        self.gen = np.random.Generator(np.random.Philox(ss))

    def child(self, label) -> "Rng":
        """Independent stream derived from (seed, ...path, hash(label))."""
        return Rng(self.seed, self._path + (_label_key(label),))

    # passthroughs kept narrow on purpose; add as needed
    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def shuffle(self, x):
        self.gen.shuffle(x)

    def choice(self, a, size=None, replace=True):
        return self.gen.choice(a, size=size, replace=replace)
