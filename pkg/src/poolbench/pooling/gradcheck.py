"""Central finite differences of ``sum(pool(a))``, the oracle for every backward."""

from __future__ import annotations

import numpy as np

from ..tensor import PoolGeometry, PrecisionError, as_tensor
from .spec import PoolSpec


def finite_difference_gradient(input, geom: PoolGeometry, spec: PoolSpec, epsilon: float = 1e-5) -> np.ndarray:
    from . import pool_forward

    x = np.asarray(input)
    if x.dtype != np.float64:
        raise PrecisionError("finite differences need a float64 tensor")
    x = as_tensor(x).copy()
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        fp = pool_forward(x, geom, spec).output
        flat[i] = orig - epsilon
        fm = pool_forward(x, geom, spec).output
        flat[i] = orig
        # difference before summing: cells the perturbation cannot reach
        # cancel exactly instead of leaving summation round-off behind
        gflat[i] = np.sum(fp - fm) / (2 * epsilon)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Worst elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / scale))
