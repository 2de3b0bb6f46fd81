"""Counter-based seeded random streams.

Every stochastic component draws from a Philox generator keyed by a tuple of
integers, so any piece of the pipeline can be recomputed in isolation and two
runs with the same seed are bit-identical regardless of execution order.
"""

from __future__ import annotations

import numpy as np

# Stream tags keep independent consumers of the same run seed decorrelated.
STREAM_SHAPE = 101
STREAM_AU = 102
STREAM_DEMOGRAPHICS = 103
STREAM_ALBEDO = 104
STREAM_PSPI_TARGET = 105
STREAM_INIT = 201
STREAM_DROPOUT = 202
STREAM_SHUFFLE = 203
STREAM_SPLIT = 204
STREAM_FOLD = 205


def keyed_rng(*key: int) -> np.random.Generator:
    """Return a Generator determined entirely by the integer key tuple."""
    seq = np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in key])
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(*key: int) -> int:
    """Collapse a key tuple into a single reproducible 32-bit seed."""
    seq = np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in key])
    return int(seq.generate_state(1, dtype=np.uint32)[0])
