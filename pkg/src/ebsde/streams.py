"""Keyed, reproducible random-number substreams.

All randomness in the package flows through counter-based Philox
generators keyed by an integer path, e.g. ``substream(seed, n, node)``.
The same (seed, path) always yields the same stream, independent of
creation order or thread schedule, which is what makes parallel node
updates bitwise reproducible.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return an independent generator for the given (seed, *path) key.

    Distinct keys give statistically independent streams; identical keys
    give identical streams.  Path entries must be nonnegative integers.
    """
    key = tuple(int(p) for p in path)
    if any(p < 0 for p in key):
        raise ValueError("substream path entries must be nonnegative")
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
