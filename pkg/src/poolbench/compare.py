"""Downsampling-similarity experiment.

Each image is scaled to [0, 1], pooled with a ``k x k`` window at stride
``k``, resized back to its original size by nearest-neighbour replication,
and compared with the original on the luminance plane.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, rng
from .media import image_to_tensor, load_image
from .metrics import SimilarityReport, SimilarityRow, mse, psnr_from_mse, ssim, upsample_nearest
from .pooling import PoolSpec, pool_forward
from .pooling.spec import default_threads
from .tensor import PoolGeometry

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")
DEFAULT_METHODS = ("softpool", "average", "maximum", "stochastic")
PROTOCOL = {
    "size_matching": "nearest upsample of pooled image to source size",
    "stride": "k",
    "plane": "luma 0.299/0.587/0.114",
    "ssim": "gaussian 11x11 sigma=1.5 valid, K1=0.01 K2=0.03, peak=1",
    "psnr_peak": "1.0 (unit range)",
}


def corpus_files(corpus: str | Path) -> list[Path]:
    corpus = Path(corpus)
    files = sorted(p for p in corpus.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())
    if not files:
        raise FileNotFoundError(f"no PNG/PPM/PGM images in {corpus}")
    return files


def evaluate_image(image_id: str, original: np.ndarray, methods: Sequence[str], ks: Sequence[int],
                   seed: int = 0, p: float | None = None, alpha: float = 0.5) -> list[SimilarityRow]:
    """Rows for one unit-range ``(C, H, W)`` image."""
    rows = []
    size = original.shape[1:]
    for k in ks:
        geom = PoolGeometry.square(k)
        for method in methods:
            spec = PoolSpec(method, p=p if method in ("lp", "pow_average") else None, alpha=alpha, seed=seed)
            pooled = pool_forward(original, geom, spec, threads=1).output
            restored = upsample_nearest(pooled, size)
            err = mse(original, restored)
            rows.append(SimilarityRow(image_id, method, int(k), ssim(original, restored), psnr_from_mse(err), err))
    return rows


def evaluate_corpus(corpus: str | Path, methods: Sequence[str] = DEFAULT_METHODS, ks: Sequence[int] = (2, 3, 5),
                    seed: int = 0, p: float | None = None, alpha: float = 0.5,
                    threads: int | None = None) -> SimilarityReport:
    files = corpus_files(corpus)
    threads = default_threads() if threads is None else threads

    def work(path: Path) -> list[SimilarityRow]:
        img = image_to_tensor(load_image(path), normalize=True, dtype=np.float64)
        return evaluate_image(path.stem, img, methods, ks, seed, p, alpha)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            chunks = list(ex.map(work, files))
    else:
        chunks = [work(f) for f in files]
    report = SimilarityReport(metadata={
        "tool": f"poolbench {__version__}",
        "rng": rng.describe(seed),
        **PROTOCOL,
        "images": len(files),
    })
    for rows in chunks:
        report.add(rows)
    return report
