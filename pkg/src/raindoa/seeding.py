"""Deterministic random-stream derivation.

Every stochastic routine in this package draws from a generator derived
from ``(seed, path)`` via :class:`numpy.random.SeedSequence` spawn keys.
Independent quantities (signal, distortion, noise) get distinct stream
ids, and long sample runs are filled in fixed-size blocks whose subseeds
depend only on the block index.  Results are therefore bit-identical
no matter how the work is split across workers.
"""

from __future__ import annotations

import numpy as np

SeedLike = "int | np.random.SeedSequence"

# Stream ids for the three independent random inputs of a snapshot.
SIGNAL_STREAM = 0
DISTORTION_STREAM = 1
NOISE_STREAM = 2

# Snapshots are generated in blocks of this many columns; the block index
# is part of the subseed path, so partial/parallel fills agree exactly.
SNAPSHOT_BLOCK = 4096


def seed_sequence(seed, *path: int) -> np.random.SeedSequence:
    """Child SeedSequence of ``seed`` at an integer path.

    ``seed`` may be an integer or an existing SeedSequence; in the latter
    case the path is appended to its spawn key.
    """
    if isinstance(seed, np.random.SeedSequence):
        entropy, key = seed.entropy, tuple(seed.spawn_key)
    else:
        entropy, key = seed, ()
    return np.random.SeedSequence(entropy, spawn_key=key + tuple(int(p) for p in path))


def generator(seed, *path: int) -> np.random.Generator:
    """Generator seeded at ``(seed, *path)``."""
    return np.random.default_rng(seed_sequence(seed, *path))


def standard_cscg(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circularly symmetric complex Gaussian samples."""
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return z / np.sqrt(2.0)


def block_ranges(total: int, block: int = SNAPSHOT_BLOCK):
    """Yield ``(index, start, stop)`` for fixed-size blocks covering ``total``."""
    for index, start in enumerate(range(0, total, block)):
        yield index, start, min(start + block, total)
