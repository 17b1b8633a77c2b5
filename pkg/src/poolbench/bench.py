"""CPU latency microbenchmark for the pooling operators.

Times are wall-clock (``time.perf_counter``) per call after discarding a
warm-up.  Memory is not sampled from the OS; the working set is the byte
count of the buffers a pass allocates or reads: input, output, saved
SoftPool weights, and for backward rows the upstream and gradient tensors.
"""

from __future__ import annotations

import csv
import datetime as _dt
import io
import itertools
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import __version__, rng
from .pooling import BACKWARD_METHODS, PoolSpec, pool_backward, pool_forward
from .tensor import DTYPES, PoolGeometry, output_shape

CSV_HEADER = ("method", "direction", "shape", "k", "stride", "iters", "warmup",
              "mean_ms", "median_ms", "p95_ms", "workset_bytes")
DEFAULT_WARMUP = 50
DEFAULT_ITERS = 200


@dataclass(frozen=True)
class BenchRow:
    method: str
    direction: str
    shape: tuple[int, ...]
    k: int
    stride: int
    iters: int
    warmup: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    workset_bytes: int

    def csv_fields(self) -> list:
        return [self.method, self.direction, "x".join(map(str, self.shape)), self.k, self.stride,
                self.iters, self.warmup, f"{self.mean_ms:.6f}", f"{self.median_ms:.6f}",
                f"{self.p95_ms:.6f}", self.workset_bytes]


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def find(self, method: str, direction: str = "forward") -> BenchRow:
        for r in self.rows:
            if r.method == method and r.direction == direction:
                return r
        raise KeyError((method, direction))

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, value in self.metadata.items():
            buf.write(f"# {key}: {value}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow(r.csv_fields())
        return buf.getvalue()


def workset_bytes(spec: PoolSpec, geom: PoolGeometry, input_shape: Sequence[int], itemsize: int,
                  backward: bool) -> int:
    n_in = int(np.prod(input_shape))
    n_out = int(np.prod(output_shape(input_shape, geom)))
    total = n_in + n_out
    if spec.method == "softpool":
        total += n_out * geom.volume
    if backward:
        total += n_out + n_in
    return total * itemsize


def _timings(fn, iterations: int, warmup: int) -> np.ndarray:
    for _ in range(warmup):
        fn()
    out = np.empty(iterations)
    clock = time.perf_counter
    for i in range(iterations):
        t0 = clock()
        fn()
        out[i] = clock() - t0
    return out * 1e3


def time_operator(spec: PoolSpec, geom: PoolGeometry, input_shape: Sequence[int],
                  iterations: int = DEFAULT_ITERS, warmup: int = DEFAULT_WARMUP,
                  precision: str = "f32", threads: int = 1, seed: int = 0) -> list[BenchRow]:
    """Forward row, plus a backward row for methods that have one."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if warmup < 0:
        raise ValueError("warmup must be >= 0")
    dtype = np.dtype(DTYPES[precision])
    shape = tuple(int(v) for v in input_shape)
    x = rng.uniforms(seed, rng.TESTING, int(np.prod(shape))).reshape(shape).astype(dtype)
    out_shape = output_shape(shape, geom)
    k, stride = geom.kernel[-1], geom.stride[-1]

    def row(direction, ms, backward):
        return BenchRow(spec.method, direction, shape, k, stride, iterations, warmup,
                        float(ms.mean()), float(np.median(ms)), float(np.percentile(ms, 95)),
                        workset_bytes(spec, geom, shape, dtype.itemsize, backward))

    fwd = _timings(lambda: pool_forward(x, geom, spec, threads=threads), iterations, warmup)
    rows = [row("forward", fwd, False)]
    if spec.method in BACKWARD_METHODS:
        up = np.ones(out_shape, dtype=dtype)
        res = pool_forward(x, geom, spec)
        bwd = _timings(lambda: pool_backward(x, up, geom, spec, res), iterations, warmup)
        rows.append(row("backward", bwd, True))
    return rows


@dataclass
class BenchConfig:
    methods: Sequence[str] = ("average", "maximum", "softpool")
    shapes: Sequence[tuple[int, ...]] = ((64, 224, 224),)
    kernels: Sequence[int] = (2,)
    strides: Sequence[int] | None = None  # None: stride = k
    iterations: int = DEFAULT_ITERS
    warmup: int = DEFAULT_WARMUP
    precision: str = "f32"
    threads: int = 1
    seed: int = 0
    p: float | None = None
    alpha: float = 0.5


def run_suite(config: BenchConfig) -> BenchReport:
    """Methods x shapes x kernels, rows in that nesting order."""
    report = BenchReport(metadata={
        "tool": f"poolbench {__version__}",
        "precision": config.precision,
        "threads": config.threads,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "rng": rng.describe(config.seed),
        "clock": "time.perf_counter",
    })
    for method, shape, k in itertools.product(config.methods, config.shapes, config.kernels):
        strides = config.strides or (k,)
        for s in strides:
            ndim = len(shape) - 1
            geom = PoolGeometry.make(k, s, 0, ndim=ndim)
            spec = PoolSpec(method, p=config.p if method in ("lp", "pow_average") else None,
                            alpha=config.alpha, seed=config.seed)
            report.rows.extend(time_operator(spec, geom, shape, config.iterations, config.warmup,
                                             config.precision, config.threads, config.seed))
    return report
