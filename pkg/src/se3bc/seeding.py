"""Counter-based seed derivation.

Every run, episode, and study cell draws from an independent stream derived
from a root seed plus a path of counters/labels, so parallel cells are
order-independent and re-runs are bit-identical.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def derive_seed(root: int, *path) -> int:
    """Integer seed for the stream at `path` under `root`."""
    ss = np.random.SeedSequence(int(root), spawn_key=tuple(_key(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])
