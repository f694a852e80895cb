"""Seed fan-out by hashing, so adding trials or rounds never shifts earlier streams."""

import hashlib

import numpy as np


def derive_seed(master, *parts):
    """64-bit seed from the master seed and any labels (ints or strings)."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master)).encode())
    for p in parts:
        h.update(b"\x1f")
        h.update(str(p).encode())
    return int.from_bytes(h.digest(), "little")


def rng_for(master, *parts):
    return np.random.default_rng(derive_seed(master, *parts))
