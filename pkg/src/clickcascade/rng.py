"""Portable, splittable random number generation.

All stochastic code in the package draws from :class:`Rng`, a xoshiro256**
generator whose state lives in a ``uint64`` array shared with the kernels.
Streams are seeded through SplitMix64, and child seeds are derived with
:func:`derive_seed`, so output depends only on integer seeds and never on
platform, backend or scheduling.

Seed derivation
---------------
``derive_seed(master, k1, k2, ...)`` folds each key into the running value
``h`` as ``h = mix64(h ^ mix64(k + 0x9E3779B97F4A7C15))`` starting from
``h = mix64(master)``, where ``mix64`` is the SplitMix64 finaliser
(multipliers ``0xBF58476D1CE4E5B9`` and ``0x94D049BB133111EB``).
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import kernels

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """SplitMix64 output finaliser."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master: int, *keys: int) -> int:
    """Deterministically derive a 64-bit child seed from ``master`` and ``keys``."""
    h = mix64(master)
    for k in keys:
        h = mix64(h ^ mix64((k + GOLDEN_GAMMA) & MASK64))
    return h


def _seed_state(seed: int) -> np.ndarray:
    state = np.empty(4, dtype=np.uint64)
    x = seed & MASK64
    for i in range(4):
        x = (x + GOLDEN_GAMMA) & MASK64
        state[i] = mix64(x)
    if not state.any():  # xoshiro must not start from all zeros
        state[0] = 1
    return state


class Rng:
    """xoshiro256** generator seeded via SplitMix64.

    ``state`` is exposed so the kernels can advance it in place.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int = 0):
        self.state = _seed_state(int(seed))

    @classmethod
    def from_state(cls, state: Sequence[int]) -> "Rng":
        rng = cls.__new__(cls)
        rng.state = np.asarray(state, dtype=np.uint64).copy()
        return rng

    def copy(self) -> "Rng":
        return Rng.from_state(self.state)

    def next_u64(self) -> int:
        return int(kernels.rng_next(self.state))

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return kernels.rng_uniform(self.state)

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n)."""
        return int(kernels.rng_below(self.state, n))

    def uniform_array(self, size: int) -> np.ndarray:
        out = np.empty(size, dtype=np.float64)
        kernels.rng_fill_uniform(self.state, out)
        return out

    def shuffle(self, items: list) -> None:
        """Fisher-Yates shuffle in place."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        perm = list(range(n))
        self.shuffle(perm)
        return perm

    def sample(self, population: Sequence[int], k: int) -> list[int]:
        """``k`` distinct elements chosen uniformly without replacement (partial shuffle)."""
        pool = list(population)
        if k > len(pool):
            raise ValueError(f"cannot sample {k} from {len(pool)} items")
        n = len(pool)
        for i in range(k):
            j = i + self.randbelow(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def coin(self) -> bool:
        return self.randbelow(2) == 1

    def normal(self) -> float:
        """Standard normal draw (Box-Muller, one value per pair of uniforms)."""
        u1 = 1.0 - self.random()  # (0, 1]
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
