"""Assemble a photographic test corpus from images shipped with
scikit-image, scikit-learn and matplotlib, written out as lossless PNG.

Synthetic images (logos, phantoms, chessboards) and pre-upscaled ones are
left out; see ``SKIMAGE_PHOTOS``.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .media import ImageBuffer, save_image

SKIMAGE_PHOTOS = (
    "astronaut.png", "brick.png", "camera.png", "cell.png", "chelsea.png", "clock_motion.png",
    "coffee.png", "coins.png", "grass.png", "gravel.png", "hubble_deep_field.jpg", "ihc.png",
    "motorcycle_left.png", "motorcycle_right.png", "page.png", "retina.jpg", "rocket.jpg", "text.png",
)
SKLEARN_PHOTOS = ("china.jpg", "flower.jpg")
MATPLOTLIB_PHOTOS = ("grace_hopper.jpg",)


def sample_sources() -> list[Path]:
    """Paths of the bundled photographs that are installed."""
    found = []
    try:
        import skimage

        base = Path(skimage.__file__).parent / "data"
        found += [base / n for n in SKIMAGE_PHOTOS if (base / n).exists()]
    except ImportError:
        pass
    try:
        import sklearn

        base = Path(sklearn.__file__).parent / "datasets" / "images"
        found += [base / n for n in SKLEARN_PHOTOS if (base / n).exists()]
    except ImportError:
        pass
    try:
        import matplotlib

        base = Path(matplotlib.get_data_path()) / "sample_data"
        found += [base / n for n in MATPLOTLIB_PHOTOS if (base / n).exists()]
    except ImportError:
        pass
    return found


def build_corpus(out_dir: str | Path, minimum: int = 20) -> list[Path]:
    from PIL import Image

    sources = sample_sources()
    if len(sources) < minimum:
        raise RuntimeError(
            f"only {len(sources)} sample photographs available (need {minimum}); "
            "install the 'corpus' extra or supply your own images"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for src in sources:
        with Image.open(src) as im:
            im = im.convert("L") if im.mode in ("L", "LA", "I;16", "1") else im.convert("RGB")
            data = np.asarray(im, dtype=np.uint8)
        dst = out_dir / (os.path.splitext(src.name)[0] + ".png")
        save_image(dst, ImageBuffer(data))
        written.append(dst)
    return sorted(written)
