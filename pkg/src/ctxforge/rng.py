"""Named substream derivation from a single run seed.

Every random decision in a run draws from a stream addressed by a path like
("render", round, pass, slot). Streams are independent of scheduling order,
so parallel generation and sequential generation produce identical results.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"substream path ints must be >= 0, got {key}")
        return int(key)
    if isinstance(key, str):
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"substream path entries must be int or str, got {type(key)!r}")


def substream(seed: int, *path) -> np.random.Generator:
    """Return a Generator for the (seed, *path) address.

    The same address always yields the same stream; distinct addresses yield
    statistically independent streams.
    """
    entropy = (int(seed) & 0xFFFFFFFFFFFFFFFF,) + tuple(_key_to_int(k) for k in path)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
