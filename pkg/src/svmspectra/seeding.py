"""Deterministic seed derivation.

Every random stream in the toolkit is a PCG64 generator keyed by an explicit
64-bit seed.  Derived seeds are obtained by hashing the master seed together
with a label and the cell coordinates, so results are independent of
execution order, worker count, and platform word size.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *parts) -> int:
    """Derive a 64-bit seed from a master seed and a sequence of labels.

    Floats are hashed through their 17-significant-digit decimal form, which
    pins down the exact binary value.
    """
    h = hashlib.sha256()
    h.update(b"svmspectra:")
    h.update(str(int(master)).encode())
    for part in parts:
        h.update(b"|")
        if isinstance(part, float):
            h.update(format(part, ".17g").encode())
        else:
            h.update(str(part).encode())
    return int.from_bytes(h.digest()[:8], "big")


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; the stream depends only on the seed value."""
    return np.random.Generator(np.random.PCG64(seed))
