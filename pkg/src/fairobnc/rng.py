"""Keyed random substreams.

Every consumer of randomness asks for ``substream(seed, *keys)``.  Keys are
mixed into a :class:`numpy.random.SeedSequence` spawn key, so a new consumer
(new key) never perturbs the stream of an existing one.  Streams use PCG64;
``STREAM_VERSION`` is bumped if the key mixing ever changes.
"""
from __future__ import annotations

import zlib

import numpy as np

STREAM_VERSION = 1


def _key_to_int(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"integer stream keys must be non-negative, got {key}")
        return int(key)
    if isinstance(key, (float, np.floating)):
        key = repr(float(key))
    # crc32 is stable across processes, unlike hash()
    return zlib.crc32(str(key).encode("utf-8"))


def substream(seed: int, *keys) -> np.random.Generator:
    """Independent generator for the coordinate ``(seed, *keys)``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    spawn_key = (STREAM_VERSION,) + tuple(_key_to_int(k) for k in keys)
    ss = np.random.SeedSequence(int(seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *keys) -> int:
    """A 63-bit integer seed for ``(seed, *keys)``, for APIs that take ints."""
    return int(substream(seed, *keys).integers(0, 2**63 - 1))
