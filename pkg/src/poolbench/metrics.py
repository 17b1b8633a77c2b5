"""Image-fidelity measures and the resizers used to compare pooled images
against their originals.

All measures work on the luminance plane: RGB tensors are reduced with the
0.299/0.587/0.114 luma weights, single-channel tensors are used as-is.

SSIM follows the usual reference parameterisation: an 11x11 Gaussian
window with sigma 1.5 evaluated only where it fits inside the image, and
``C1 = (0.01 peak)^2``, ``C2 = (0.03 peak)^2``.  Images smaller than the
window fall back to non-overlapping 8x8 blocks (or one block covering
everything when even that does not fit).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import correlate1d

LUMA = np.array([0.299, 0.587, 0.114])
MEAN_ID = "__mean__"
CSV_HEADER = ("image", "method", "k", "ssim", "psnr", "mse")


def luma(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 2:
        return t
    if t.ndim != 3 or t.shape[0] not in (1, 3):
        raise ValueError(f"expected a (1|3, H, W) image tensor, got {t.shape}")
    if t.shape[0] == 1:
        return t[0]
    return np.tensordot(LUMA, t, axes=1)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return luma(a), luma(b)


def mse(a, b) -> float:
    ya, yb = _pair(a, b)
    return float(np.mean((ya - yb) ** 2))


def psnr_from_mse(err: float, peak: float = 1.0) -> float:
    if err == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    return psnr_from_mse(mse(a, b), peak)


def _gaussian(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r * r) / (2 * sigma * sigma))
    return g / g.sum()


def _valid_filter(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    h = len(taps) // 2
    out = correlate1d(correlate1d(img, taps, axis=0, mode="constant"), taps, axis=1, mode="constant")
    return out[h:img.shape[0] - h, h:img.shape[1] - h]


def _block_means(img: np.ndarray, bh: int, bw: int) -> np.ndarray:
    H = img.shape[0] // bh * bh
    W = img.shape[1] // bw * bw
    return img[:H, :W].reshape(H // bh, bh, W // bw, bw).mean(axis=(1, 3))


def ssim(a, b, peak: float = 1.0, window: str = "gaussian") -> float:
    ya, yb = _pair(a, b)
    if window not in ("gaussian", "block"):
        raise ValueError(f"window must be 'gaussian' or 'block', got {window!r}")
    if window == "gaussian" and min(ya.shape) < 11:
        window = "block"
    if window == "gaussian":
        taps = _gaussian()
        local = lambda z: _valid_filter(z, taps)
    else:
        bh, bw = (8, 8) if min(ya.shape) >= 8 else ya.shape
        local = lambda z: _block_means(z, bh, bw)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu_a = local(ya)
    mu_b = local(yb)
    var_a = local(ya * ya) - mu_a * mu_a
    var_b = local(yb * yb) - mu_b * mu_b
    cov = local(ya * yb) - mu_a * mu_b
    num = (2 * (mu_a * mu_b) + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _spatial(t: np.ndarray, target: Sequence[int]) -> tuple[int, int]:
    target = tuple(int(v) for v in target)
    if len(target) == t.ndim:
        target = target[1:]
    if len(target) != 2 or min(target) < 1:
        raise ValueError(f"target must be (H, W), got {target}")
    return target


def upsample_nearest(t: np.ndarray, target: Sequence[int]) -> np.ndarray:
    """Resize a ``(C, H, W)`` tensor; target pixel ``y`` copies source ``floor(y * h / H)``."""
    t = np.asarray(t)
    H, W = _spatial(t, target)
    h, w = t.shape[-2:]
    rows = (np.arange(H) * h) // H
    cols = (np.arange(W) * w) // W
    return np.ascontiguousarray(t[..., rows, :][..., cols])


def _area_matrix(n_src: int, n_dst: int) -> np.ndarray:
    # row d averages the source interval [d*n_src/n_dst, (d+1)*n_src/n_dst)
    edges = np.arange(n_dst + 1) * n_src / n_dst
    lo = edges[:-1, None]
    hi = edges[1:, None]
    cells = np.arange(n_src)[None, :]
    overlap = np.clip(np.minimum(hi, cells + 1) - np.maximum(lo, cells), 0, None)
    return overlap / overlap.sum(axis=1, keepdims=True)


def downsample_area(t: np.ndarray, target: Sequence[int]) -> np.ndarray:
    """Area resampling: each target pixel is the mean of the source box it covers.

    For integer reduction factors this is the plain block mean; fractional
    boxes weight partially covered pixels by their overlap.
    """
    t = np.asarray(t, dtype=np.float64) if np.asarray(t).dtype.kind != "f" else np.asarray(t)
    H, W = _spatial(t, target)
    h, w = t.shape[-2:]
    rm = _area_matrix(h, H).astype(t.dtype)
    cm = _area_matrix(w, W).astype(t.dtype)
    return np.ascontiguousarray(np.einsum("Hh,...hw,Ww->...HW", rm, t, cm))


@dataclass(frozen=True)
class SimilarityRow:
    image: str
    method: str
    k: int
    ssim: float
    psnr: float
    mse: float


@dataclass
class SimilarityReport:
    rows: list[SimilarityRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, rows: Iterable[SimilarityRow]) -> None:
        self.rows.extend(rows)

    def sorted_rows(self) -> list[SimilarityRow]:
        return sorted(self.rows, key=lambda r: (r.image, r.method, r.k))

    def aggregates(self) -> list[SimilarityRow]:
        """Mean SSIM/PSNR/MSE per (method, k), in first-seen method order."""
        groups: dict[tuple[str, int], list[SimilarityRow]] = {}
        for r in self.rows:
            groups.setdefault((r.method, r.k), []).append(r)
        return [
            SimilarityRow(
                MEAN_ID, m, k,
                float(np.mean([r.ssim for r in rs])),
                float(np.mean([r.psnr for r in rs])),
                float(np.mean([r.mse for r in rs])),
            )
            for (m, k), rs in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0]))
        ]

    def mean(self, method: str, k: int, field_name: str) -> float:
        for r in self.aggregates():
            if r.method == method and r.k == k:
                return getattr(r, field_name)
        raise KeyError((method, k))

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, value in self.metadata.items():
            buf.write(f"# {key}: {value}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.sorted_rows() + self.aggregates():
            w.writerow([r.image, r.method, r.k, _fmt(r.ssim), _fmt(r.psnr), _fmt(r.mse)])
        return buf.getvalue()


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def read_similarity_csv(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = []
    for rec in csv.DictReader(lines):
        rec["k"] = int(rec["k"])
        for key in ("ssim", "psnr", "mse"):
            rec[key] = float(rec[key])
        rows.append(rec)
    return rows
