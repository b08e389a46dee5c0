"""Deterministic random-stream splitting.

Every random draw in the package comes from a generator keyed by
``(master_seed, *key)``.  Keys may be integers or short strings; strings are
mapped through CRC32 so the mapping is stable across interpreter runs (the
builtin ``hash`` is salted).  Because each replicate owns its own stream, the
results do not depend on how work is split across processes.
"""
from __future__ import annotations

import zlib

import numpy as np

# Stream tags used across the package.
PRIOR = "prior"
PRIOR_RESAMPLE = "prior-resample"
SIMULATE = "simulate"
IMPUTATION = "imputation"
TEST_PATH = "test-path"
BOOTSTRAP = "bootstrap"
NN_INIT = "nn-init"
NN_SHUFFLE = "nn-shuffle"
PILOT = "pilot"
BANDS = "bands"


def _key_int(k) -> int:
    if isinstance(k, (int, np.integer)):
        if k < 0:
            raise ValueError("stream keys must be nonnegative")
        return int(k)
    return zlib.crc32(str(k).encode("utf-8"))


def seed_sequence(master_seed: int, *key) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(_key_int(k) for k in key))


def substream(master_seed: int, *key) -> np.random.Generator:
    """Generator for the stream ``(master_seed, *key)``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, *key)))


def derive_seed(master_seed: int, *key) -> int:
    """A 32-bit integer seed for the stream ``(master_seed, *key)``."""
    return int(seed_sequence(master_seed, *key).generate_state(1, dtype=np.uint32)[0])
