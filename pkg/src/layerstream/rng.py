"""Portable seeded pseudo-random numbers.

All randomness in the simulator and trainer goes through :class:`XorShift64Star`
so runs are bit-reproducible on any platform. The algorithm:

* seeding: the integer seed is passed through one round of splitmix64
  (increment ``0x9E3779B97F4A7C15``, multipliers ``0xBF58476D1CE4E5B9`` and
  ``0x94D049BB133111EB``); a zero result is replaced by the increment.
* step: ``x ^= x >> 12; x ^= x << 25; x ^= x >> 27`` on 64 bits, output
  ``x * 0x2545F4914F6CDD1D mod 2**64``.
* uniform in [0, 1): top 53 bits of the output times ``2**-53``.
* standard normal: Box-Muller on two uniforms, cosine branch only.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MULT = 0x2545F4914F6CDD1D


def splitmix64(seed: int) -> int:
    z = (seed + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class XorShift64Star:
    """xorshift64* generator with a splitmix64-scrambled seed."""

    def __init__(self, seed: int = 0):
        state = splitmix64(int(seed) & MASK64)
        self._state = state or _GOLDEN

    @property
    def state(self) -> int:
        return self._state

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self._state = x
        return (x * _MULT) & MASK64

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        u1 = 1.0 - self.random()  # (0, 1]
        u2 = self.random()
        return mean + std * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def below(self, n: int) -> int:
        """Integer in [0, n) by multiply-shift on the top 32 bits."""
        if n <= 0:
            raise ValueError("n must be positive")
        return ((self.next_u64() >> 32) * n) >> 32

    def bernoulli(self, p: float) -> int:
        return 1 if self.random() < p else 0

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of ``range(n)``."""
        items = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
        return items

    def spawn(self) -> "XorShift64Star":
        """Child generator seeded from this stream."""
        return XorShift64Star(self.next_u64())
