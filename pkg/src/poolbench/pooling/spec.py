from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..rng import check_seed

METHODS = ("softpool", "average", "maximum", "sum", "pow_average", "lp", "stochastic", "s3", "gate")
GRAD_MODES = ("paper_proportional", "exact_jacobian")
# pow_average has no exponent of its own; 2 is this library's default
POW_AVERAGE_P = 2.0


@dataclass(frozen=True)
class PoolSpec:
    """Which pooling operator to run and with what parameters.

    Parameters that the chosen method does not use are still validated.
    ``clamp_floor`` is the smallest admissible softmax denominator; ``None``
    means the smallest positive normal number of the input precision.
    """

    method: str = "softpool"
    p: float | None = None
    alpha: float = 0.5
    seed: int = 0
    grad_mode: str = "paper_proportional"
    clamp_floor: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown pooling method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.p is not None and not (np.isfinite(self.p) and self.p > 0):
            raise ValueError(f"p must be a positive real, got {self.p}")
        if self.method == "lp" and self.p is None:
            raise ValueError("lp pooling needs an explicit p")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        check_seed(self.seed)
        if self.grad_mode not in GRAD_MODES:
            raise ValueError(f"grad_mode must be one of {GRAD_MODES}, got {self.grad_mode!r}")
        if self.clamp_floor is not None and not self.clamp_floor > 0:
            raise ValueError(f"clamp_floor must be positive, got {self.clamp_floor}")

    @property
    def exponent(self) -> float:
        if self.p is not None:
            return float(self.p)
        return POW_AVERAGE_P

    def floor_for(self, dtype) -> float:
        if self.clamp_floor is not None:
            return float(self.clamp_floor)
        return float(np.finfo(dtype).tiny)


@dataclass
class PoolResult:
    """Pooled output plus, for SoftPool, the per-region softmax weights.

    ``saved_weights`` has the output shape with one extra trailing axis of
    length ``prod(kernel)``; slots of padded cells hold 0.
    """

    output: np.ndarray
    saved_weights: np.ndarray | None = None
    _weights_raw: np.ndarray | None = None  # (C, K, T, H, W) buffer used by the kernels


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("POOLBENCH_THREADS", "1")))
    except ValueError:
        return 1


def run_channels(fn: Callable[[int, int], None], channels: int, threads: int | None) -> None:
    """Call ``fn(c0, c1)`` over channel chunks, possibly from several threads.

    Channels never share regions, so chunking cannot change any result.
    """
    threads = default_threads() if threads is None else max(1, int(threads))
    threads = min(threads, channels)
    if threads == 1:
        fn(0, channels)
        return
    bounds = np.linspace(0, channels, threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as ex:
        list(ex.map(lambda ab: fn(*ab), zip(bounds[:-1], bounds[1:])))
