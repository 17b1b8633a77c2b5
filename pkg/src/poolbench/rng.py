"""Seedable counter-based random streams.

Every draw is a pure function of ``(seed, stream, position)``: the Philox
4x64-10 block cipher is keyed with ``(seed, stream)`` and the n-th uniform
of a stream is always the same value, whatever order or thread asked for
it.  Stochastic poolers consume one uniform per region (or per band), so
results never depend on scheduling.
"""

from __future__ import annotations

import numpy as np

ALGORITHM = "philox4x64-10"
U64_MAX = 2**64 - 1

# stream ids; keep stable, they are part of the reproducibility contract
STOCHASTIC = 0
S3_TIME = 1
S3_ROWS = 2
S3_COLS = 3
TESTING = 99


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= U64_MAX:
        raise ValueError(f"seed must fit in u64, got {seed}")
    return seed


def uniforms(seed: int, stream: int, count: int) -> np.ndarray:
    """First ``count`` float64 uniforms in [0, 1) of ``stream``."""
    key = np.array([check_seed(seed), stream], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.random(count)


def describe(seed: int) -> str:
    return f"{ALGORITHM} seed={check_seed(seed)}"
