"""Deterministic 64-bit PRNG used for every seeded choice in the package.

A splitmix-style generator keeps dataset synthesis, k-means seeding, parameter
initialization, and batch shuffling reproducible from a single integer seed
without depending on any external library's stream layout.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    """Splitmix64 sequence with convenience draws (uniform, normal, shuffle)."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def split(self) -> "SplitMix64":
        """Child generator with a state derived from (and advancing) this one."""
        return SplitMix64(self.next_u64())

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def normal(self) -> float:
        """Standard normal via Box-Muller, caching the spare deviate."""
        if self._spare_normal is not None:
            value = self._spare_normal
            self._spare_normal = None
            return value
        # u1 > 0 so the log is finite.
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        radius = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = radius * math.sin(2.0 * math.pi * u2)
        return radius * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> list[float]:
        return [self.normal() for _ in range(n)]

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection, bias-free."""
        if n <= 0:
            raise ValueError("randrange needs n >= 1")
        limit = _MASK64 - (_MASK64 + 1) % n
        while True:
            value = self.next_u64()
            if value <= limit:
                return value % n

    def sample_without_replacement(self, n: int, k: int) -> list[int]:
        """k distinct integers from [0, n), order random."""
        if k > n:
            raise ValueError("cannot sample more items than the population")
        if k * 3 >= n:
            pool = list(range(n))
            self.shuffle(pool)
            return pool[:k]
        picked: set[int] = set()
        out: list[int] = []
        while len(out) < k:
            candidate = self.randrange(n)
            if candidate not in picked:
                picked.add(candidate)
                out.append(candidate)
        return out

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]
