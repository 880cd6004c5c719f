"""Deterministic random number generation.

Every stochastic operation in the library takes an explicit Rng. The
underlying bit generator is Philox (counter-based), so identical seeds
produce identical streams on every platform. Child generators are derived
by hashing the parent seed together with a label, which keeps independent
pipeline stages on independent streams.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["Rng", "derive_seed"]


def derive_seed(seed: int, *labels) -> int:
    """Derive a 64-bit child seed from a parent seed and a label path."""
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for lab in labels:
        h.update(b"/")
        h.update(str(lab).encode())
    return int.from_bytes(h.digest()[:8], "big")


class Rng:
    """Seedable counter-based generator with labeled spawning."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def spawn(self, *labels) -> "Rng":
        return Rng(derive_seed(self.seed, *labels))

    # Thin pass-throughs; one generator per task, never shared.
    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, a, size=None, replace=True):
        return self._gen.choice(a, size=size, replace=replace)
