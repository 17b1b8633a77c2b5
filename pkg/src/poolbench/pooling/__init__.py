"""Pooling operators.

``pool_forward`` dispatches on ``PoolSpec.method``; ``pool_backward`` covers
the methods that have a gradient (softpool, average, maximum, sum).
"""

from __future__ import annotations

import numpy as np

from ..tensor import PoolGeometry, as_tensor
from .baselines import avg_backward, max_backward, sum_backward
from .baselines import forward as _baseline_forward
from .gradcheck import finite_difference_gradient, max_relative_error
from .softpool import (
    softmax_weights,
    softpool3d_backward,
    softpool3d_forward,
    softpool_backward,
    softpool_forward,
)
from .spec import GRAD_MODES, METHODS, PoolResult, PoolSpec

BACKWARD_METHODS = ("softpool", "average", "maximum", "sum")

__all__ = [
    "BACKWARD_METHODS",
    "GRAD_MODES",
    "METHODS",
    "PoolResult",
    "PoolSpec",
    "avg_backward",
    "finite_difference_gradient",
    "max_backward",
    "max_relative_error",
    "pool_backward",
    "pool_forward",
    "softmax_weights",
    "softpool3d_backward",
    "softpool3d_forward",
    "softpool_backward",
    "softpool_forward",
    "sum_backward",
]


def pool_forward(input, geom: PoolGeometry, spec: PoolSpec, threads: int | None = None) -> PoolResult:
    x = as_tensor(input)
    if spec.method == "softpool":
        return softpool_forward(x, geom, spec, threads)
    return PoolResult(_baseline_forward(x, geom, spec, threads))


def pool_backward(input, upstream, geom: PoolGeometry, spec: PoolSpec,
                  result: PoolResult | None = None) -> np.ndarray:
    m = spec.method
    if m == "softpool":
        return softpool_backward(input, upstream, geom, spec, result)
    if m == "average":
        return avg_backward(input, upstream, geom)
    if m == "maximum":
        return max_backward(input, upstream, geom)
    if m == "sum":
        return sum_backward(input, upstream, geom)
    raise NotImplementedError(f"no backward for {m!r}")
