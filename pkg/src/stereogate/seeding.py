"""Seed derivation.

Every random stream in the package is a numpy ``PCG64`` generator whose seed
is derived from one user-facing integer plus a stream label and indices, so
that e.g. tree 17 of the overall forest always sees the same draws no matter
what else ran before it.
"""

import hashlib

import numpy as np


def derive_seed(seed, *keys):
    """Derive a 63-bit child seed from ``seed`` and a path of str/int keys."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode())
    for key in keys:
        h.update(b"\x1f")
        h.update(str(key).encode())
    return int.from_bytes(h.digest(), "little") >> 1


def make_rng(seed, *keys):
    return np.random.default_rng(derive_seed(seed, *keys))
