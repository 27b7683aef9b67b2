"""Deterministic sub-seed derivation.

All randomness in the package flows from a single master seed; independent
components derive their own streams by hashing a component tag into a
numpy SeedSequence alongside the master seed.  Worker splits derive
per-worker streams as ``(tag, worker_index)`` and are concatenated in
worker-index order, so results do not depend on scheduling.
"""

from __future__ import annotations

import zlib

import numpy as np


def subseed(master_seed: int, tag: str, index: int = 0) -> np.random.SeedSequence:
    """SeedSequence for a named component under a master seed."""
    return np.random.SeedSequence([int(master_seed), zlib.crc32(tag.encode()), int(index)])


def subrng(master_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Generator for a named component under a master seed."""
    return np.random.default_rng(subseed(master_seed, tag, index))
