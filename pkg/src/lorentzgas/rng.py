"""Counter-based random streams.

Every trajectory draws from its own stream keyed by ``(seed, index)``, so a
run gives identical numbers whatever order or worker the trajectories are
scheduled on. Inside numba kernels the stream is SplitMix64 evaluated at an
explicit counter; on the Python side we hand out numpy ``Philox`` generators
keyed the same way.
"""
import numpy as np
from numba import njit, uint64

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def mix64(z):
    z = uint64(z)
    z = (z ^ (z >> uint64(30))) * _M1
    z = (z ^ (z >> uint64(27))) * _M2
    return z ^ (z >> uint64(31))


@njit(cache=True)
def stream_key(seed, index):
    """Derive the 64-bit key of trajectory ``index`` under master ``seed``."""
    return mix64(mix64(uint64(seed) + _GOLDEN) ^ mix64(uint64(index) * _GOLDEN + uint64(1)))


@njit(cache=True, inline="always")
def uniform(key, counter):
    """Uniform double in [0, 1) at position ``counter`` of stream ``key``."""
    return (mix64(uint64(key) + (uint64(counter) + uint64(1)) * _GOLDEN) >> uint64(11)) * _INV53


@njit(cache=True, inline="always")
def uniform_open(key, counter):
    """Uniform double in (0, 1)."""
    return ((mix64(uint64(key) + (uint64(counter) + uint64(1)) * _GOLDEN) >> uint64(11)) + 0.5) * _INV53


def generator(seed, index=0):
    """numpy Generator on a Philox stream keyed by ``(seed, index)``."""
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(index) & (2**64 - 1)]))
