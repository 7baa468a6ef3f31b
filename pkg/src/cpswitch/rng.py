"""Seed derivation and the in-kernel generator.

Every random stream is addressed by ``(master seed, replica index, stream id)``.
The address is hashed through :class:`numpy.random.SeedSequence`, so derived
streams are independent and identical on every platform. NumPy-side sampling
uses the counter-based Philox bit generator; the compiled kernels use
xoshiro256** seeded with four words from the same derivation.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# stream ids used across the package
STREAM_TIMELINE = 0
STREAM_DIRECT = 1
STREAM_INITIAL = 2
STREAM_EXTRA = 3
STREAM_THINNING = 4
STREAM_BOOTSTRAP = 5


def seed_sequence(master: int, replica: int = 0, stream: int = 0, *sub: int) -> np.random.SeedSequence:
    """``sub`` extends the address, e.g. with a family index inside a coupling."""
    if master < 0:
        raise ValueError("seeds must be non-negative")
    key = (int(stream), int(replica)) + tuple(int(s) for s in sub)
    return np.random.SeedSequence(entropy=int(master), spawn_key=key)


def generator(master: int, replica: int = 0, stream: int = 0, *sub: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_sequence(master, replica, stream, *sub)))


def kernel_state(master: int, replica: int = 0, stream: int = 0) -> np.ndarray:
    """Four-word xoshiro256** state for one replica (never all zero)."""
    s = seed_sequence(master, replica, stream).generate_state(4, np.uint64)
    if not s.any():
        s[0] = 1
    return s


def kernel_states(master: int, replicas, stream: int) -> np.ndarray:
    return np.stack([kernel_state(master, int(r), stream) for r in replicas]) if len(replicas) else np.zeros((0, 4), np.uint64)


@njit(inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit
def next_u64(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit
def uniform(s):
    """Double in [0, 1) from the top 53 bits."""
    return float(next_u64(s) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit
def exponential(s, rate):
    return -np.log(1.0 - uniform(s)) / rate


@njit
def randbelow(s, n):
    k = int(uniform(s) * n)
    return k if k < n else n - 1
