"""Counter-based SplitMix64 streams with hierarchical substreams.

The algorithm is fixed so that a dataset generated from a seed can be
reproduced bit for bit by any implementation:

* ``mix64(z)``: ``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
  z *= 0x94D049BB133111EB; z ^= z >> 31`` (all arithmetic mod 2**64).
* Output ``i`` (1-based) of the stream keyed ``k`` is
  ``mix64(k + i * 0x9E3779B97F4A7C15)``. A stream keyed by ``seed`` is
  therefore the classic SplitMix64 sequence seeded with ``seed``.
* The child of key ``k`` at index ``j`` has key
  ``mix64((k ^ 0x6A09E667F3BCC909) + (j + 1) * 0x9E3779B97F4A7C15)``.
  ``derive(seed, a, b, ...)`` applies this for each path element in turn.
* ``uniform()`` is ``(next_u64() >> 11) * 2**-53``, in ``[0, 1)``.
"""
from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
SPAWN_SALT = 0x6A09E667F3BCC909


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def child_key(key: int, index: int) -> int:
    if index < 0:
        raise ValueError("substream index must be non-negative")
    return mix64((key ^ SPAWN_SALT) + (index + 1) * GOLDEN)


def derive_key(seed: int, *path: int) -> int:
    key = seed & MASK64
    for index in path:
        key = child_key(key, index)
    return key


class Stream:
    """A position in the SplitMix64 sequence for one key."""

    __slots__ = ("key", "counter")

    def __init__(self, key: int, counter: int = 0):
        self.key = key & MASK64
        self.counter = counter

    @classmethod
    def derive(cls, seed: int, *path: int) -> "Stream":
        return cls(derive_key(seed, *path))

    def spawn(self, *path: int) -> "Stream":
        return Stream(derive_key(self.key, *path))

    def next_u64(self) -> int:
        self.counter += 1
        return mix64(self.key + self.counter * GOLDEN)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_range(self, low: float, high: float) -> float:
        return low + (high - low) * self.uniform()

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p

    def below(self, bound: int) -> int:
        """Unbiased integer in ``[0, bound)`` by rejection sampling."""
        if bound < 1:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % bound

    def angle(self) -> float:
        return 2.0 * math.pi * self.uniform()

    def sample_indices(self, n: int, k: int) -> list[int]:
        """``k`` distinct indices from ``range(n)`` (partial Fisher-Yates)."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot draw {k} distinct indices from {n}")
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]
