"""Deterministic, splittable random streams.

Every random decision in the harness flows through :class:`SeededRng`, a
SplitMix64 generator whose initial state is derived by hashing the run seed
together with a stream label (typically patch id, strategy string, and draw
index).  Two consequences:

* identical (seed, stream) pairs yield bit-identical sequences on every
  platform and Python build, and
* streams are independent, so adding patches or strategies to a run never
  perturbs the draws made for any other (patch, strategy) pair.

Stream derivation: the decimal seed and the stream parts are joined with a
0x1F unit separator, hashed with SHA-256, and the first 8 digest bytes
(little-endian) become the SplitMix64 state.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1


def derive_state(seed: int, *parts: str) -> int:
    """Hash a seed plus stream labels into a 64-bit generator state."""
    payload = "\x1f".join([str(seed), *parts]).encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


class SeededRng:
    """SplitMix64 stream addressed by (seed, stream parts)."""

    def __init__(self, seed: int, *parts: str):
        self.seed = seed
        self.parts = parts
        self._state = derive_state(seed, *parts)

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection sampling."""
        if n <= 0:
            raise ValueError("randbelow needs n >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def uniform(self, low: float, high: float) -> float:
        """Uniform float in [low, high) with 53-bit resolution."""
        frac = (self.next_u64() >> 11) * 2.0**-53
        return low + (high - low) * frac

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct integers from [0, n), uniform without replacement.

        Partial Fisher-Yates over a virtual pool (only displaced entries are
        stored, so cost is O(k) not O(n)); result order is the draw order.
        """
        if k > n:
            raise ValueError(f"cannot sample {k} distinct values from {n}")
        displaced: dict[int, int] = {}
        out = []
        for i in range(k):
            j = i + self.randbelow(n - i)
            out.append(displaced.get(j, j))
            displaced[j] = displaced.get(i, i)
        return out

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]
