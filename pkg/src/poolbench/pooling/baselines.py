"""Comparison poolers: average, maximum, sum, power average / Lp, gate,
stochastic and S3.

Power averages use ``|a|`` and do not restore the sign; stochastic pooling
treats negative activations as zero probability mass.  Both behave as the
textbook operators on non-negative (post-ReLU) input.

S3 here samples raw activations: per stride band of every pooled axis one
row/column offset is drawn and shared across channels.  There is no stride-1
max-pooling stage in front of the sampling.
"""

from __future__ import annotations

import numpy as np

from .. import rng
from ..tensor import GeometryError, PoolGeometry, as_tensor, output_shape
from . import _kernels as K
from .softpool import view4
from .spec import PoolSpec, run_channels

_MODES = {"sum": K.SUM, "average": K.MEAN, "maximum": K.MAX, "pow_average": K.POW, "lp": K.POW}


def reduce_pool(x: np.ndarray, geom: PoolGeometry, method: str, p: float = 1.0,
                threads: int | None = None) -> np.ndarray:
    x = as_tensor(x)
    x4, out4 = view4(x, geom)
    out = np.empty(out4, dtype=x.dtype)
    mode = _MODES[method]
    g = geom.as4()
    run_channels(lambda a, b: K.window_reduce(x4[a:b], *g, mode, float(p), out[a:b]), out4[0], threads)
    return out.reshape(output_shape(x.shape, geom))


def gate_pool(x: np.ndarray, geom: PoolGeometry, alpha: float, threads: int | None = None) -> np.ndarray:
    mx = reduce_pool(x, geom, "maximum", threads=threads).astype(np.float64)
    av = reduce_pool(x, geom, "average", threads=threads).astype(np.float64)
    return (alpha * mx + (1.0 - alpha) * av).astype(x.dtype)


def stochastic_pool(x: np.ndarray, geom: PoolGeometry, seed: int, threads: int | None = None) -> np.ndarray:
    x = as_tensor(x)
    x4, out4 = view4(x, geom)
    out = np.empty(out4, dtype=x.dtype)
    per_channel = int(np.prod(out4[1:]))
    u = rng.uniforms(seed, rng.STOCHASTIC, out4[0] * per_channel)
    g = geom.as4()

    def chunk(a, b):
        K.stochastic_pick(x4[a:b], *g, u[a * per_channel:b * per_channel], out[a:b])

    run_channels(chunk, out4[0], threads)
    return out.reshape(output_shape(x.shape, geom))


def _band_picks(n: int, k: int, s: int, p: int, n_out: int, u: np.ndarray) -> np.ndarray:
    picks = np.empty(n_out, dtype=np.int64)
    for o in range(n_out):
        start = o * s - p
        window = np.arange(max(start, 0), min(start + k, n))
        band = window[window < start + min(s, k)]
        cand = band if band.size else window
        picks[o] = cand[min(int(u[o] * cand.size), cand.size - 1)]
    return picks


def s3_pool(x: np.ndarray, geom: PoolGeometry, seed: int) -> np.ndarray:
    x = as_tensor(x)
    out = output_shape(x.shape, geom)
    streams = (rng.S3_ROWS, rng.S3_COLS) if geom.ndim == 2 else (rng.S3_TIME, rng.S3_ROWS, rng.S3_COLS)
    idx = [
        _band_picks(n, k, s, p, o, rng.uniforms(seed, stream, o))
        for n, k, s, p, o, stream in zip(x.shape[1:], geom.kernel, geom.stride, geom.padding, out[1:], streams)
    ]
    return np.ascontiguousarray(x[np.ix_(np.arange(x.shape[0]), *idx)])


def max_backward(input, upstream, geom: PoolGeometry) -> np.ndarray:
    """Route each upstream value to its region's argmax (lowest index on ties)."""
    return _simple_backward(input, upstream, geom, K.MAX)


def avg_backward(input, upstream, geom: PoolGeometry) -> np.ndarray:
    """Spread each upstream value evenly over its region."""
    return _simple_backward(input, upstream, geom, K.MEAN)


def sum_backward(input, upstream, geom: PoolGeometry) -> np.ndarray:
    return _simple_backward(input, upstream, geom, K.SUM)


def _simple_backward(input, upstream, geom, mode) -> np.ndarray:
    x = as_tensor(input)
    up = np.ascontiguousarray(upstream, dtype=x.dtype)
    x4, out4 = view4(x, geom)
    if up.shape != output_shape(x.shape, geom):
        raise GeometryError(f"upstream shape {up.shape} does not match output {output_shape(x.shape, geom)}")
    grad = np.zeros_like(x)
    K.simple_backward(x4, *geom.as4(), mode, up.reshape(out4), grad.reshape(x4.shape))
    return grad


def forward(x: np.ndarray, geom: PoolGeometry, spec: PoolSpec, threads: int | None = None) -> np.ndarray:
    m = spec.method
    if m in ("average", "maximum", "sum"):
        return reduce_pool(x, geom, m, threads=threads)
    if m in ("pow_average", "lp"):
        return reduce_pool(x, geom, m, spec.exponent, threads=threads)
    if m == "gate":
        return gate_pool(x, geom, spec.alpha, threads=threads)
    if m == "stochastic":
        return stochastic_pool(x, geom, spec.seed, threads=threads)
    if m == "s3":
        return s3_pool(x, geom, spec.seed)
    raise ValueError(f"{m!r} is not a comparison pooler")
