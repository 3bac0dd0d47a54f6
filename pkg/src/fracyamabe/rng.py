"""Seeded random streams.

Every consumer draws from ``stream(seed, name)``: a Philox counter-based
generator keyed by the run seed and a stable hash of the stream name, so
streams are independent of each other and of call order.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, *names: str | int) -> np.random.Generator:
    key = tuple(n if isinstance(n, int) else zlib.crc32(n.encode()) for n in names)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))
