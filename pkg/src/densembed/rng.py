"""xorshift64* pseudo-random generator (algorithm version 1).

Fixed so that shuffles and initial weights can be reproduced bit-for-bit by
any implementation:

* seeding: ``state = splitmix64(seed)``; a zero state is replaced by
  ``0x9E3779B97F4A7C15``;
* step: ``x ^= x >> 12; x ^= x << 25; x ^= x >> 27`` (mod 2**64), output
  ``x * 0x2545F4914F6CDD1D mod 2**64``;
* ``random()``: top 53 bits of the output times ``2**-53``;
* ``below(n)``: ``(output * n) >> 64``;
* ``permutation(n)``: Fisher-Yates from the back, swapping ``i`` with
  ``below(i + 1)``;
* ``normal()``: Box-Muller with ``u1 = 1 - random()``, both outputs used in
  order (cos branch first).
"""
from __future__ import annotations

import math

import numpy as np

ALGORITHM = "xorshift64*-v1"
_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_seed(seed: int, *streams: int) -> int:
    """Mix a base seed with stream identifiers (epoch, run index, ...)."""
    x = splitmix64(seed & _MASK)
    for s in streams:
        x = splitmix64(x ^ (s & _MASK))
    return x


class XorShift64Star:
    def __init__(self, seed: int):
        state = splitmix64(int(seed) & _MASK)
        self.state = state or 0x9E3779B97F4A7C15
        self._spare: float | None = None

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        return (self.next_u64() * n) >> 64

    def uniform(self, low: float, high: float, size: int) -> np.ndarray:
        return np.array([low + (high - low) * self.random() for _ in range(size)])

    def normal(self, mean: float, std: float, size: int) -> np.ndarray:
        out = np.empty(size)
        for k in range(size):
            if self._spare is not None:
                z, self._spare = self._spare, None
            else:
                u1 = 1.0 - self.random()
                u2 = self.random()
                r = math.sqrt(-2.0 * math.log(u1))
                z = r * math.cos(2.0 * math.pi * u2)
                self._spare = r * math.sin(2.0 * math.pi * u2)
            out[k] = mean + std * z
        return out

    def permutation(self, n: int) -> np.ndarray:
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return np.array(perm, dtype=np.int64)
