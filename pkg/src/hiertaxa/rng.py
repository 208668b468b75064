"""Portable random streams.

Every random decision in the package draws from the raw 64-bit output of
Philox4x64-10 keyed directly with ``(seed, 0)``.  Bit-generator streams are
stable across numpy releases; the distribution-level helpers of
``numpy.random.Generator`` are not, so all transforms live here:

* uniform doubles use the top 53 bits: ``(u >> 11) * 2**-53``
* permutations sort the raw words (stable argsort), so they are exact
  integer operations and identical on every platform
* normals use the Box-Muller transform on two uniforms

Sub-seeds are derived by hashing ``seed`` together with string tags, so
independent consumers (split k, specimen s, cascade node n) never share a
stream and do not depend on the order in which they are created.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1
_TWO_POW_53 = float(1 << 53)


def derive_seed(seed: int, *tags) -> int:
    """Hash ``seed`` and ``tags`` into a new unsigned 64-bit seed."""
    text = "|".join([str(int(seed) & _MASK64)] + [str(t) for t in tags])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class Stream:
    def __init__(self, seed: int, *tags):
        if tags:
            seed = derive_seed(seed, *tags)
        self.seed = int(seed) & _MASK64
        key = np.array([self.seed, 0], dtype=np.uint64)
        self._bits = np.random.Philox(key=key)

    def raw(self, n: int) -> np.ndarray:
        if n <= 0:
            return np.zeros(0, dtype=np.uint64)
        return np.asarray(self._bits.random_raw(n), dtype=np.uint64)

    def uniform(self, n: int) -> np.ndarray:
        """Doubles in [0, 1)."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) / _TWO_POW_53

    def normal(self, size) -> np.ndarray:
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape))
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)  # (0, 1]
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
        return z[:n].reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.raw(n), kind="stable")

    def sample(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)``, returned in ascending order."""
        if k > n:
            raise ValueError(f"cannot sample {k} of {n}")
        return np.sort(self.permutation(n)[:k])

    def shuffled(self, items):
        items = list(items)
        return [items[i] for i in self.permutation(len(items))]
