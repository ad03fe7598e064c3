"""Seedable 64-bit counter-based generator (splitmix64).

Every randomized operation in the library takes an explicit state so runs
are reproducible. The state is a one-element ``uint64`` array advanced in
place, which lets the same generator live on both sides of the backend
split: the numba kernels advance it with wrapping ``uint64`` arithmetic and
the Python helpers below produce bit-identical draws with masked ints.

Bulk generation exploits the counter structure: the outputs for counters
``s+g, s+2g, ..., s+kg`` are computed vectorized and the state jumps ahead
by ``k`` steps, so scalar and bulk consumption interleave consistently.
"""

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK64 = (1 << 64) - 1

# 2**-53, to turn the top 53 bits of a draw into a double in [0, 1)
_INV53 = 1.0 / (1 << 53)


def new_state(seed):
    """Fresh generator state from an integer seed."""
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
    return np.array([int(seed) & MASK64], dtype=np.uint64)


def next_u64(state):
    """Advance the state one step and return the 64-bit output."""
    s = (int(state[0]) + GAMMA) & MASK64
    state[0] = s
    z = s
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def next_double(state):
    """Uniform double in [0, 1)."""
    return (next_u64(state) >> 11) * _INV53


def next_below(state, n):
    """Uniform integer in [0, n), unbiased via rejection."""
    if n <= 0:
        raise ValueError("n must be positive")
    threshold = (MASK64 + 1 - n) % n
    while True:
        z = next_u64(state)
        if z >= threshold:
            return z % n


def bulk_u64(state, k):
    """Vectorized draw of k outputs, advancing the state by k steps."""
    s0 = int(state[0])
    counters = (s0 + GAMMA * np.arange(1, k + 1, dtype=np.uint64)).astype(np.uint64)
    state[0] = np.uint64((s0 + GAMMA * k) & MASK64)
    z = counters
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


def bulk_doubles(state, k):
    """Vectorized draw of k uniform doubles in [0, 1)."""
    return (bulk_u64(state, k) >> np.uint64(11)).astype(np.float64) * _INV53


def substate(state, index):
    """Derive an independent child state keyed by ``index``.

    Children for different indices are decorrelated regardless of the order
    they are used in, which keeps coordinate-parallel estimation bit-identical
    to the sequential result.
    """
    base = int(state[0])
    z = (base + GAMMA * (int(index) + 1)) & MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return np.array([z ^ (z >> 31)], dtype=np.uint64)


def numpy_rng(state):
    """Seed a ``np.random.Generator`` from one draw of the state.

    Used by the numpy backend and the data generators for distributions a
    hand-rolled mixer should not reimplement (Gaussian, chi-square, ...).
    """
    return np.random.default_rng(next_u64(state))
