"""Seed derivation.

Every random stream in the package is derived from one integer master seed
plus a tuple of non-negative integers naming the consumer, through
:class:`numpy.random.SeedSequence`'s ``spawn_key``. A stream therefore
depends only on *where* it is used, never on the order in which streams were
created, so trials and grid points can be evaluated in any order or in
parallel and still reproduce bit for bit.

Stream paths used across the package::

    (TRIAL, t, RINGS)       key rings of trial t
    (TRIAL, t, DEPLOY)      cluster assignment of trial t
    (TRIAL, t, CAPTURE)     captured nodes of trial t
    (POINT, h, ...)         grid point with stable hash h (harness)
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

RINGS = 0
DEPLOY = 1
CAPTURE = 2
TRIAL = 10
POINT = 11


def rng_for(seed: int, *path: int) -> np.random.Generator:
    """Return an independent generator for ``path`` under ``seed``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(seed: int, *path: int) -> int:
    """Derive a 63-bit integer seed, for APIs that take a plain seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    words = ss.generate_state(2, dtype=np.uint32)
    return int((int(words[0]) << 31) ^ int(words[1]))


def stable_hash(obj) -> int:
    """Order-independent 32-bit hash of a JSON-serialisable object."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return int.from_bytes(hashlib.blake2b(blob, digest_size=4).digest(), "big")
