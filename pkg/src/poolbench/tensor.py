"""Dense tensors, pooling geometry and kernel-region enumeration.

Tensors are plain C-contiguous numpy arrays laid out channel-first:
``(C, H, W)`` for images and ``(C, T, H, W)`` for frame volumes.  Only
float32 and float64 are accepted.

Padding never inserts values.  A window that hangs over the border simply
covers fewer cells, so the region of a border output is the in-bounds part
of its window.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

__all__ = [
    "GeometryError",
    "PrecisionError",
    "PoolGeometry",
    "as_tensor",
    "output_shape",
    "regions",
    "region_coords",
    "read_tensor",
    "write_tensor",
]

DTYPES = {"f32": np.float32, "f64": np.float64}


class GeometryError(ValueError):
    """Kernel/stride/padding do not fit the input."""


class PrecisionError(TypeError):
    """Operation requested at an unsupported precision."""


def as_tensor(data, dtype=None) -> np.ndarray:
    """Validate ``data`` as a rank-3 or rank-4 float tensor.

    Returns a C-contiguous array.  No copy is made if ``data`` already
    satisfies the layout and dtype.
    """
    arr = np.asarray(data)
    if dtype is None:
        dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else np.float32
    dtype = np.dtype(DTYPES.get(dtype, dtype))
    if dtype not in (np.float32, np.float64):
        raise PrecisionError(f"unsupported precision {dtype}")
    if arr.ndim not in (3, 4):
        raise ValueError(f"expected rank 3 (C,H,W) or 4 (C,T,H,W), got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"all extents must be >= 1, got {arr.shape}")
    return np.ascontiguousarray(arr, dtype=dtype)


def precision_name(arr: np.ndarray) -> str:
    return "f64" if arr.dtype == np.float64 else "f32"


def _triple(value, n: int, name: str) -> tuple[int, ...]:
    if isinstance(value, (int, np.integer)):
        out = (int(value),) * n
    else:
        out = tuple(int(v) for v in value)
    if len(out) != n:
        raise GeometryError(f"{name} needs {n} entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class PoolGeometry:
    """Window extents, strides and padding per pooled axis.

    Axes follow the tensor layout: ``(H, W)`` for 2D pooling of rank-3
    tensors and ``(T, H, W)`` for 3D pooling of rank-4 tensors.
    """

    kernel: tuple[int, ...]
    stride: tuple[int, ...]
    padding: tuple[int, ...]

    def __post_init__(self):
        n = len(self.kernel)
        if n not in (2, 3):
            raise GeometryError(f"geometry must cover 2 or 3 axes, got {n}")
        if len(self.stride) != n or len(self.padding) != n:
            raise GeometryError("kernel, stride and padding must have the same length")
        if any(k < 1 for k in self.kernel):
            raise GeometryError(f"kernel extents must be >= 1: {self.kernel}")
        if any(s < 1 for s in self.stride):
            raise GeometryError(f"strides must be >= 1: {self.stride}")
        if any(p < 0 for p in self.padding):
            raise GeometryError(f"padding must be non-negative: {self.padding}")
        # pad >= k would allow windows lying entirely in the padding
        if any(p >= k for p, k in zip(self.padding, self.kernel)):
            raise GeometryError(f"padding must be smaller than the kernel: {self.padding} vs {self.kernel}")

    @classmethod
    def square(cls, k: int, stride: int | None = None, padding: int = 0) -> "PoolGeometry":
        """2D ``k x k`` window; stride defaults to ``k``."""
        s = k if stride is None else stride
        return cls((k, k), (s, s), (padding, padding))

    @classmethod
    def make(cls, kernel, stride=None, padding=0, ndim: int = 2) -> "PoolGeometry":
        kernel = _triple(kernel, ndim, "kernel")
        stride = kernel if stride is None else _triple(stride, ndim, "stride")
        return cls(kernel, stride, _triple(padding, ndim, "padding"))

    @property
    def ndim(self) -> int:
        return len(self.kernel)

    @property
    def volume(self) -> int:
        """Maximum region cardinality."""
        return int(np.prod(self.kernel))

    def as4(self) -> tuple[int, ...]:
        """Flatten to ``(kt, kh, kw, st, sh, sw, pt, ph, pw)`` with a unit time axis for 2D."""
        if self.ndim == 2:
            k, s, p = (1, *self.kernel), (1, *self.stride), (0, *self.padding)
        else:
            k, s, p = self.kernel, self.stride, self.padding
        return (*k, *s, *p)


def _check_rank(in_shape: Sequence[int], geom: PoolGeometry) -> None:
    if len(in_shape) != geom.ndim + 1:
        raise GeometryError(
            f"{geom.ndim}D geometry needs a rank-{geom.ndim + 1} tensor, got shape {tuple(in_shape)}"
        )


def output_shape(in_shape: Sequence[int], geom: PoolGeometry) -> tuple[int, ...]:
    """Pooled shape; the channel axis passes through.

    >>> output_shape((1, 5, 5), PoolGeometry.square(2))
    (1, 2, 2)
    """
    _check_rank(in_shape, geom)
    out = [int(in_shape[0])]
    for n, k, s, p in zip(in_shape[1:], geom.kernel, geom.stride, geom.padding):
        o = (n + 2 * p - k) // s + 1
        if n + 2 * p < k or o < 1:
            raise GeometryError(f"kernel {geom.kernel} too large for input {tuple(in_shape)}")
        out.append(o)
    return tuple(out)


def _axis_spans(n: int, k: int, s: int, p: int, n_out: int) -> list[range]:
    spans = []
    for o in range(n_out):
        start = o * s - p
        spans.append(range(max(start, 0), min(start + k, n)))
    return spans


def regions(in_shape: Sequence[int], geom: PoolGeometry) -> list[np.ndarray]:
    """Flat input indices of every region, channel-major then output row-major.

    Each region is a sorted int64 array.  This is the reference enumeration;
    the pooling kernels walk the same windows without materialising it.
    """
    out = output_shape(in_shape, geom)
    spatial = tuple(in_shape[1:])
    spans = [
        _axis_spans(n, k, s, p, o)
        for n, k, s, p, o in zip(spatial, geom.kernel, geom.stride, geom.padding, out[1:])
    ]
    plane = int(np.prod(spatial))
    cells = []
    # index arithmetic per output cell; row-major over the spatial axes
    for idx in np.ndindex(*out[1:]):
        grids = np.meshgrid(*[np.arange(spans[a][i].start, spans[a][i].stop) for a, i in enumerate(idx)],
                            indexing="ij")
        cells.append(np.ravel_multi_index(tuple(g.ravel() for g in grids), spatial).astype(np.int64))
    result = []
    for c in range(int(in_shape[0])):
        base = c * plane
        result.extend(cell + base for cell in cells)
    return result


def region_coords(in_shape: Sequence[int], flat: np.ndarray) -> np.ndarray:
    """Map flat indices back to ``(c, [t,] y, x)`` rows."""
    return np.stack(np.unravel_index(np.asarray(flat), tuple(in_shape)), axis=-1)


# Raw tensor files: b"PTNS", version, precision code, rank, u32 extents, LE data.
_MAGIC = b"PTNS"
_VERSION = 1
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_FROM_CODE = {v: k for k, v in _CODES.items()}


def write_tensor(f: BinaryIO | str, tensor: np.ndarray) -> None:
    t = as_tensor(tensor)
    if isinstance(f, (str, bytes)) or hasattr(f, "__fspath__"):
        with open(f, "wb") as fh:
            write_tensor(fh, t)
        return
    f.write(_MAGIC + struct.pack("<BBB", _VERSION, _CODES[t.dtype], t.ndim))
    f.write(struct.pack(f"<{t.ndim}I", *t.shape))
    f.write(t.astype(t.dtype.newbyteorder("<"), copy=False).tobytes())


def read_tensor(f: BinaryIO | str) -> np.ndarray:
    if isinstance(f, (str, bytes)) or hasattr(f, "__fspath__"):
        with open(f, "rb") as fh:
            return read_tensor(fh)
    head = f.read(7)
    if len(head) < 7 or head[:4] != _MAGIC:
        raise ValueError("not a PTNS tensor file")
    version, code, rank = struct.unpack("<BBB", head[4:])
    if version != _VERSION:
        raise ValueError(f"unsupported PTNS version {version}")
    if code not in _FROM_CODE:
        raise PrecisionError(f"unknown precision code {code}")
    raw = f.read(4 * rank)
    if len(raw) != 4 * rank:
        raise ValueError("truncated PTNS header")
    shape = struct.unpack(f"<{rank}I", raw)
    dtype = _FROM_CODE[code].newbyteorder("<")
    count = int(np.prod(shape))
    buf = f.read(count * dtype.itemsize)
    if len(buf) != count * dtype.itemsize:
        raise ValueError("truncated PTNS data")
    arr = np.frombuffer(buf, dtype=dtype).reshape(shape)
    return as_tensor(arr.astype(_FROM_CODE[code]))
