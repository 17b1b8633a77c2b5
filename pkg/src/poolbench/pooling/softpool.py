"""SoftPool: softmax-weighted pooling over each kernel region.

Each activation in a region gets the weight ``exp(a_i) / sum_j exp(a_j)``
and the region pools to the weighted sum.  Weights are computed after
subtracting the region maximum, which leaves them unchanged but keeps the
exponentials in range.

Two backward rules are offered:

``paper_proportional`` (default)
    each input receives ``w_i * upstream``.  This is the commonly quoted rule,
    and it is *not* the derivative of the forward map.

``exact_jacobian``
    each input receives ``w_i * (1 + a_i - pooled) * upstream``, the true
    derivative, which is what finite differences certify.
"""

from __future__ import annotations

import os

import numpy as np

from ..tensor import GeometryError, PoolGeometry, as_tensor, output_shape
from . import _kernels as K
from .spec import PoolResult, PoolSpec, run_channels

_DEBUG = bool(os.environ.get("POOLBENCH_DEBUG"))


def softmax_weights(values, clamp_floor: float | None = None) -> np.ndarray:
    """Softmax of one region.

    >>> softmax_weights([1.0, 2.0]).round(5)
    array([0.26894, 0.73106])
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("softmax_weights needs a non-empty 1-D sequence")
    if not np.all(np.isfinite(v)):
        raise ValueError("softmax_weights needs finite values")
    e = np.exp(v - v.max())
    floor = np.finfo(np.float64).tiny if clamp_floor is None else clamp_floor
    return e / max(e.sum(), floor)


def view4(x: np.ndarray, geom: PoolGeometry) -> tuple[np.ndarray, tuple[int, ...]]:
    """Pooling view ``(C, T, H, W)`` of ``x`` and the matching 4-axis output shape."""
    out = output_shape(x.shape, geom)
    if x.ndim == 3:
        return x[:, None], (out[0], 1, out[1], out[2])
    return x, out


def softpool_forward(input, geom: PoolGeometry, spec: PoolSpec | None = None,
                     threads: int | None = None) -> PoolResult:
    spec = spec or PoolSpec()
    x = as_tensor(input)
    x4, out4 = view4(x, geom)
    g = geom.as4()
    C = out4[0]
    z = np.empty((C, geom.volume, *out4[1:]), dtype=x.dtype)
    out = np.empty(out4, dtype=x.dtype)
    mx = np.empty(out4, dtype=x.dtype)
    floor = spec.floor_for(x.dtype)

    def chunk(c0, c1):
        zc = z[c0:c1]
        K.softpool_shift(x4[c0:c1], *g, zc, mx[c0:c1])
        np.exp(zc, out=zc)
        if _DEBUG:
            # exponentials of shifted values are never negative
            assert not np.any(zc < 0)
        K.softpool_reduce(x4[c0:c1], *g, zc, mx[c0:c1], floor, out[c0:c1])

    run_channels(chunk, C, threads)
    if x.ndim == 3:
        out = out[:, 0]
        weights = np.moveaxis(z[:, :, 0], 1, -1)
    else:
        weights = np.moveaxis(z, 1, -1)
    return PoolResult(out, weights, z)


def softpool_backward(input, upstream, geom: PoolGeometry, spec: PoolSpec | None = None,
                      result: PoolResult | None = None) -> np.ndarray:
    """Gradient with respect to ``input``; overlapping regions add up.

    Pass the forward ``result`` to reuse its weights instead of recomputing.
    """
    spec = spec or PoolSpec()
    x = as_tensor(input)
    up = np.ascontiguousarray(upstream, dtype=x.dtype)
    x4, out4 = view4(x, geom)
    if up.shape != output_shape(x.shape, geom):
        raise GeometryError(f"upstream shape {up.shape} does not match output {output_shape(x.shape, geom)}")
    if result is None or result._weights_raw is None:
        result = softpool_forward(x, geom, spec)
    up4 = up.reshape(out4)
    grad = np.zeros_like(x)
    K.softpool_backward(x4, *geom.as4(), result._weights_raw, up4,
                        spec.grad_mode == "exact_jacobian", grad.reshape(x4.shape))
    return grad


def _check3d(x: np.ndarray, geom: PoolGeometry) -> None:
    if x.ndim != 4 or geom.ndim != 3:
        raise GeometryError("3D SoftPool needs a (C,T,H,W) tensor and a (T,H,W) geometry")


def softpool3d_forward(input, geom: PoolGeometry, spec: PoolSpec | None = None,
                       threads: int | None = None) -> PoolResult:
    x = as_tensor(input)
    _check3d(x, geom)
    return softpool_forward(x, geom, spec, threads)


def softpool3d_backward(input, upstream, geom: PoolGeometry, spec: PoolSpec | None = None,
                        result: PoolResult | None = None) -> np.ndarray:
    x = as_tensor(input)
    _check3d(x, geom)
    return softpool_backward(x, upstream, geom, spec, result)
