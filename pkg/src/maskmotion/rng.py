"""Deterministic random number generation.

All stochastic operations in this package draw from :class:`Rng`, a PCG32
generator with Box-Muller Gaussian sampling. The generator is defined purely
in terms of 64-bit wrapping integer arithmetic, so identical (seed, stream,
call sequence) produces bit-identical output on every platform.
"""

from __future__ import annotations

import numpy as np

_MULT = np.uint64(6364136223846793005)
_U64 = np.uint64
_TWO32 = float(2**32)


def splitmix64(x: int) -> int:
    """One SplitMix64 step; used to derive child seeds from a parent seed."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


class Rng:
    """PCG32 stream with vectorized skip-ahead generation.

    The underlying LCG is affine, so a batch of n states is computed in one
    shot from powers of the multiplier instead of a Python loop. ``counter``
    tracks how many 32-bit outputs have been consumed.

    Instances are single-owner: do not share one Rng across threads.
    """

    algorithm = "pcg32"

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = int(stream) & 0xFFFFFFFFFFFFFFFF
        self.counter = 0
        with np.errstate(over="ignore"):
            inc = np.array([(self.stream << 1) | 1], dtype=_U64)
            state = np.array([0], dtype=_U64)
            state = state * _MULT + inc
            state = (state + np.array([self.seed], dtype=_U64)) * _MULT + inc
        self._inc = inc
        self._state = state

    def _raw32(self, n: int) -> np.ndarray:
        """Next n PCG32 outputs as uint32."""
        if n == 0:
            return np.empty(0, dtype=np.uint32)
        with np.errstate(over="ignore"):
            apow = np.empty(n + 1, dtype=_U64)
            apow[0] = 1
            np.multiply.accumulate(np.full(n, _MULT, dtype=_U64), out=apow[1:])
            psum = np.empty(n + 1, dtype=_U64)
            psum[0] = 0
            np.cumsum(apow[:n], out=psum[1:])
            states = apow[:n] * self._state + psum[:n] * self._inc
            self._state = apow[n:] * self._state + psum[n:] * self._inc
        self.counter += n
        xorshifted = (((states >> _U64(18)) ^ states) >> _U64(27)).astype(np.uint32)
        rot = (states >> _U64(59)).astype(np.uint32)
        return (xorshifted >> rot) | (xorshifted << ((np.uint32(0) - rot) & np.uint32(31)))

    def uniform(self, size=None) -> np.ndarray | float:
        """Uniform float64 in [0, 1)."""
        if size is None:
            return float(self._raw32(1)[0]) / _TWO32
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape)) if shape else 1
        return (self._raw32(n).astype(np.float64) / _TWO32).reshape(shape)

    def gaussian(self, size=None) -> np.ndarray | float:
        """Standard normal via Box-Muller on consecutive uniform pairs."""
        scalar = size is None
        shape = (1,) if scalar else ((size,) if np.isscalar(size) else tuple(size))
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        raw = self._raw32(2 * pairs).astype(np.float64)
        u1 = (raw[0::2] + 1.0) / _TWO32  # (0, 1]: keeps log() finite
        u2 = raw[1::2] / _TWO32
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * pairs, dtype=np.float64)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        if scalar:
            return float(z[0])
        return z[:n].reshape(shape)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in [low, high). Range must fit in 32 bits."""
        span = int(high) - int(low)
        if span <= 0:
            raise ValueError(f"empty integer range [{low}, {high})")
        if size is None:
            return low + int(self._raw32(1)[0]) % span
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape)) if shape else 1
        return (low + self._raw32(n).astype(np.int64) % span).reshape(shape)

    def spawn(self, key: int) -> "Rng":
        """Child generator with a seed derived from (seed, key); independent stream."""
        return Rng(splitmix64(self.seed ^ splitmix64(key)), stream=self.stream + 1 + key)
