"""Seed lineage for reproducible sampling.

Every random stream in the package comes from a numpy ``Philox`` (4x64-10,
counter based) bit generator keyed by a 64-bit integer. Derived seeds are
produced with :func:`mix64`, a fold of SplitMix64 over the input words::

    h = 0
    for w in words:
        h = splitmix64(h ^ (w mod 2**64))

Uniform doubles follow numpy's ``(next_uint64 >> 11) * 2**-53`` convention.
"""

import numpy as np

MASK64 = (1 << 64) - 1

# stream tags used with mix64 so that independent draws never share a key
ORDER_STREAM = 0x4F52444552  # "ORDER"
EXTRA_DRIVER_STREAM = 0x4558545241  # "EXTRA"


def splitmix64(x):
    """One step of the SplitMix64 output function on a 64-bit word."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix64(*words):
    h = 0
    for w in words:
        h = splitmix64(h ^ (int(w) & MASK64))
    return h


def make_rng(seed):
    """Return a ``numpy.random.Generator`` keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=int(seed) & MASK64))
