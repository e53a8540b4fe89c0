"""Deterministic stream derivation for every random draw in the package.

All sampling goes through Philox, a counter-based generator, keyed by an
explicit 64-bit seed. Sub-streams are derived with SeedSequence spawn keys so
independent components never share a stream; this is what makes
common-random-number finite differences reproducible.
"""

from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the (seed, *key) sub-stream.

    The same (seed, key) always yields the same stream; distinct keys yield
    statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64,
                                spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
