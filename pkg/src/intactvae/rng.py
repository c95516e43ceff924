"""Seeded randomness.

All randomness flows through ``numpy.random.Generator`` instances built here.
Each stage of an experiment (DGP parameters, data, training, Monte Carlo
estimation) draws from its own generator, seeded by :func:`derive_seed`; the
training generator is consumed in the order split, initialization, minibatches.
Child seeds come from :class:`numpy.random.SeedSequence`, so a master seed
determines every stream in a sweep.
"""
from __future__ import annotations

import hashlib

import numpy as np


def make_rng(seed):
    """A PCG64 generator seeded from an int (or a SeedSequence)."""
    return np.random.Generator(np.random.PCG64(seed))


def _key_int(key):
    if isinstance(key, (int, np.integer)):
        return int(key)
    digest = hashlib.blake2b(repr(key).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(master, *keys):
    """Deterministic 63-bit child seed of ``master`` for the path ``keys``.

    Keys may be ints or any value with a stable ``repr`` (strings, floats).
    """
    seq = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(_key_int(k) for k in keys))
    return int(seq.generate_state(2, np.uint64)[0] >> np.uint64(1))


def row_key(*arrays):
    """Stable 64-bit key for the raw bytes of one data row."""
    h = hashlib.blake2b(digest_size=8)
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return int.from_bytes(h.digest(), "little")
