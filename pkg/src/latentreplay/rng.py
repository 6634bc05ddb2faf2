"""Seeded, platform-independent random number generation.

The generator is counter-based splitmix64: draw k is the splitmix64
finalizer applied to ``seed + (k+1) * 0x9E3779B97F4A7C15`` (mod 2^64).
The 64-bit integer stream is therefore bit-identical on every platform;
derived floats use only IEEE-754 arithmetic (uniforms take the top 53
bits, normals come from Box-Muller). Sampling without replacement sorts
one u64 key per element, so a draw of k items always consumes exactly n
integers regardless of k.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(x):
    """splitmix64 finalizer, vectorized over uint64 arrays."""
    z = x.astype(np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class SeededRng:
    """Deterministic PRNG; equal seeds give equal draw sequences."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._counter = 0

    def next_u64(self, n: int = 1) -> np.ndarray:
        """Next ``n`` raw 64-bit draws."""
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            x = np.uint64(self.seed) + idx * _GOLDEN
        return _splitmix64(x)

    def uniform(self, shape=None) -> np.ndarray | float:
        """Uniform draws in [0, 1) (float64; 53 random bits each)."""
        n = 1 if shape is None else int(np.prod(shape))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        if shape is None:
            return float(u[0])
        return u.reshape(shape)

    def normal(self, shape=None, dtype=np.float32) -> np.ndarray:
        """Standard normal draws via Box-Muller."""
        n = 1 if shape is None else int(np.prod(shape))
        m = (n + 1) // 2
        u1 = 1.0 - (self.next_u64(m) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        u2 = (self.next_u64(m) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        if shape is None:
            return z.astype(dtype)[0]
        return z.reshape(shape).astype(dtype)

    def randint(self, lo: int, hi: int, n: int = 1) -> np.ndarray:
        """Integers in [lo, hi); multiply-shift mapping of one draw each."""
        if hi <= lo:
            raise ValueError("empty range")
        span = hi - lo
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        return lo + np.minimum((u * span).astype(np.int64), span - 1)

    def choice(self, n: int, k: int, replace: bool = False) -> np.ndarray:
        """Sample k indices from range(n), uniformly, without replacement
        by default. Always consumes exactly n draws when replace=False."""
        if replace:
            return self.randint(0, n, k)
        if k > n:
            raise ValueError(f"cannot draw {k} from {n} without replacement")
        keys = self.next_u64(n)
        return np.argsort(keys, kind="stable")[:k]

    def permutation(self, n: int) -> np.ndarray:
        return self.choice(n, n)

    def spawn(self, tag: int) -> "SeededRng":
        """Independent child stream derived from (seed, tag)."""
        with np.errstate(over="ignore"):
            child = _splitmix64(
                np.array([np.uint64(self.seed) ^ (np.uint64(tag) * _MIX1)], dtype=np.uint64)
            )[0]
        return SeededRng(int(child))
