"""Deterministic seeded random numbers for reproducible experiment corpora.

The generator is splitmix64, chosen because it is counter-based and fully
specified by its update equations, so identical seeds give identical streams
in any implementation:

    output_n = mix(seed + n * GAMMA)      (n = 1, 2, ..., arithmetic mod 2^64)

    mix(z):  z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
             z ^= z >> 27;  z *= 0x94D049BB133111EB
             z ^= z >> 31

Uniform doubles take the top 53 bits: u = (output >> 11) * 2^-53, in [0, 1).

Gaussians use Box-Muller on consecutive uniform pairs (u1, u2), in that order:

    r  = sqrt(-2 * ln(1 - u1))
    z0 = r * cos(2 * pi * u2)
    z1 = r * sin(2 * pi * u2)

A request for an odd count discards the trailing sin value.
"""

from __future__ import annotations

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK64 = (1 << 64) - 1


def mix64(z: int) -> int:
    """Finalizer of splitmix64 on a 64-bit integer."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def fold_seed(seed: int, *parts: int) -> int:
    """Derive an independent stream seed from a base seed and integer labels.

    Defined as repeated s = mix64((s ^ part) + GAMMA); used to give each
    (layer, head, sample) its own stream so generation order and parallelism
    cannot change the output.
    """
    s = seed & _MASK64
    for part in parts:
        s = mix64((s ^ (part & _MASK64)) + GAMMA)
    return s


class SplitMix64:
    """splitmix64 stream with scalar and vectorized output paths.

    Scalar and vectorized draws share one counter, so interleaving them is
    well defined: the n-th 64-bit output is always mix(seed + n * GAMMA).
    """

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._n = 0  # outputs consumed so far

    def next_u64(self) -> int:
        self._n += 1
        return mix64((self.seed + self._n * GAMMA) & _MASK64)

    def raw(self, count: int) -> np.ndarray:
        """Next `count` 64-bit outputs as a uint64 array."""
        if count < 0:
            raise ValueError(f"count must be >= 0, got {count}")
        idx = np.arange(self._n + 1, self._n + count + 1, dtype=np.uint64)
        self._n += count
        z = np.uint64(self.seed) + idx * np.uint64(GAMMA)  # wraps mod 2^64
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def uniforms(self, count: int) -> np.ndarray:
        """`count` doubles uniform in [0, 1)."""
        return (self.raw(count) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def gaussians(self, count: int, sigma: float = 1.0) -> np.ndarray:
        """`count` i.i.d. normal draws with mean 0 and std `sigma`."""
        pairs = (count + 1) // 2
        u = self.uniforms(2 * pairs)
        r = np.sqrt(-2.0 * np.log(1.0 - u[0::2]))
        ang = (2.0 * np.pi) * u[1::2]
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(ang)
        out[1::2] = r * np.sin(ang)
        return sigma * out[:count]

    def below(self, bound: int) -> int:
        """Unbiased integer in [0, bound) via rejection of the biased tail."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        limit = (2**64 // bound) * bound
        while True:
            z = self.next_u64()
            if z < limit:
                return z % bound

    def sample_indices(self, n: int, count: int) -> tuple[int, ...]:
        """`count` distinct indices from range(n), ascending.

        Partial Fisher-Yates over the index pool; deterministic for a given
        stream position.
        """
        if not 0 <= count <= n:
            raise ValueError(f"need 0 <= count <= n, got count={count}, n={n}")
        pool = list(range(n))
        for i in range(count):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return tuple(sorted(pool[:count]))
