"""Counter-based deterministic random numbers.

All randomness in this package flows through a splitmix64 stream: the n-th
output is ``mix64(seed + n * GOLDEN)`` where ``mix64`` is the splitmix64
finalizer. The generator is counter-based, so blocks of any size can be
drawn without sequential state beyond an integer counter, and child seeds
for independent streams (per trial, per stage) are derived by hashing a
path of integer labels into the master seed.

Gaussian variates use Box-Muller on the uniform output, mapping the top 53
bits of each 64-bit word to (0, 1]. Given a seed and a call sequence the
produced values are reproducible.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / (1 << 53)


def mix64(z: np.ndarray | int) -> np.ndarray | int:
    """splitmix64 finalizer; accepts a Python int or a uint64 array."""
    if isinstance(z, np.ndarray):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, *path: int) -> int:
    """Derive a child seed from a master seed and a path of integer labels.

    Children with different paths are statistically independent streams;
    the expansion is the splitmix64 finalizer applied to each path step.
    """
    s = master & MASK64
    for p in path:
        s = mix64((s + GOLDEN) & MASK64)
        s = mix64(s ^ mix64(p & MASK64))
    return s


class Stream:
    """Sequential view over the counter-based generator for one seed."""

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self._counter = 0

    def u64(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        return mix64(np.uint64(self.seed) + np.uint64(GOLDEN) * idx)

    def uniform(self, n: int) -> np.ndarray:
        """n doubles uniform on (0, 1]."""
        return ((self.u64(n) >> _S11) + np.uint64(1)).astype(np.float64) * _INV53

    def uniform_co(self, n: int) -> np.ndarray:
        """n doubles uniform on [0, 1)."""
        return (self.u64(n) >> _S11).astype(np.float64) * _INV53

    def normal(self, n: int) -> np.ndarray:
        """n standard normals via Box-Muller; consumes 2*ceil(n/2) words."""
        m = (n + 1) // 2
        u1 = self.uniform(m)
        u2 = self.uniform_co(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
        return z[:n]

    def complex_normal(self, n: int) -> np.ndarray:
        """n circularly-symmetric complex normals with E|z|^2 = 1."""
        z = self.normal(2 * n)
        return (z[:n] + 1j * z[n:]) / np.sqrt(2.0)
