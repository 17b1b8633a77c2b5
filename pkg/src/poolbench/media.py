"""8-bit image and frame-sequence I/O.

Binary PGM (P5) and PPM (P6) are read and written directly; PNG goes
through Pillow and is limited to 8-bit grayscale or RGB (palette images are
expanded to RGB, alpha is dropped).  16-bit and float formats are rejected.
"""

from __future__ import annotations

import fnmatch
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_PIXELS = 1 << 28


class MediaError(ValueError):
    pass


class UnsupportedFormatError(MediaError):
    pass


class TruncatedFileError(MediaError):
    pass


@dataclass
class ImageBuffer:
    """Row-major interleaved 8-bit pixels, shape ``(height, width, channels)``."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim == 2:
            d = d[:, :, None]
        if d.ndim != 3 or d.shape[2] not in (1, 3) or min(d.shape) < 1:
            raise MediaError(f"image data must be (h, w, 1|3), got {d.shape}")
        if d.dtype != np.uint8:
            raise MediaError(f"image data must be uint8, got {d.dtype}")
        self.data = np.ascontiguousarray(d)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other):
        return isinstance(other, ImageBuffer) and np.array_equal(self.data, other.data)


@dataclass
class FrameSequence:
    frames: list[ImageBuffer]
    fps: float | None = None
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.frames:
            raise MediaError("a frame sequence needs at least one frame")
        shape = self.frames[0].data.shape
        for i, f in enumerate(self.frames):
            if f.data.shape != shape:
                raise MediaError(f"frame {i} has shape {f.data.shape}, expected {shape}")


_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def _parse_pnm(raw: bytes) -> ImageBuffer:
    magic = raw[:2]
    channels = {b"P5": 1, b"P6": 3}.get(magic)
    if channels is None:
        raise UnsupportedFormatError(f"unsupported PNM magic {magic!r}")
    pos = 2
    fields = []
    for _ in range(3):
        m = _TOKEN.match(raw, pos)
        if not m:
            raise TruncatedFileError("truncated PNM header")
        try:
            fields.append(int(m.group(1)))
        except ValueError:
            raise MediaError(f"bad PNM header field {m.group(1)!r}") from None
        pos = m.end()
    width, height, maxval = fields
    if pos >= len(raw) or not raw[pos:pos + 1].isspace():
        raise TruncatedFileError("truncated PNM header")
    pos += 1
    if width < 1 or height < 1:
        raise MediaError(f"bad image size {width}x{height}")
    if width * height * channels > MAX_PIXELS:
        raise MediaError(f"image dimensions {width}x{height} overflow the supported size")
    if maxval > 255:
        raise UnsupportedFormatError("16-bit PNM is not supported")
    if maxval < 1:
        raise MediaError(f"bad PNM maxval {maxval}")
    n = width * height * channels
    body = raw[pos:pos + n]
    if len(body) < n:
        raise TruncatedFileError(f"expected {n} pixel bytes, found {len(body)}")
    data = np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels)
    if maxval != 255:
        data = np.rint(data.astype(np.float64) * (255.0 / maxval)).astype(np.uint8)
    return ImageBuffer(data.copy())


def _load_png(path) -> ImageBuffer:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise UnsupportedFormatError(f"{path}: not a PNG file")
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I", "F") or "16" in mode:
                raise UnsupportedFormatError(f"{path}: {mode} PNG is not 8-bit")
            if mode in ("P", "PA"):
                im = im.convert("RGBA" if "transparency" in im.info or mode == "PA" else "RGB")
                mode = im.mode
            if mode == "1":
                im = im.convert("L")
            elif mode == "LA":
                im = im.convert("L")
            elif mode == "RGBA":
                im = im.convert("RGB")
            elif mode not in ("L", "RGB"):
                raise UnsupportedFormatError(f"{path}: unsupported PNG mode {mode}")
            im.load()
            return ImageBuffer(np.asarray(im, dtype=np.uint8))
    except UnidentifiedImageError as e:
        raise UnsupportedFormatError(str(e)) from None
    except OSError as e:
        raise TruncatedFileError(f"{path}: {e}") from None


def load_image(path) -> ImageBuffer:
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(26)
    if head.startswith(b"\x89PNG"):
        if len(head) < 26 or head[12:16] != b"IHDR":
            raise TruncatedFileError(f"{path}: truncated PNG header")
        # IHDR bit depth; Pillow would silently narrow 16-bit RGB
        if head[24] > 8:
            raise UnsupportedFormatError(f"{path}: {head[24]}-bit PNG is not supported")
        return _load_png(path)
    if head[:2] in (b"P5", b"P6"):
        return _parse_pnm(path.read_bytes())
    raise UnsupportedFormatError(f"{path}: only PNG, PGM (P5) and PPM (P6) are supported")


def save_image(path, image: ImageBuffer) -> None:
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".png":
        from PIL import Image

        data = image.data[:, :, 0] if image.channels == 1 else image.data
        Image.fromarray(data).save(path, format="PNG")
        return
    if ext in (".pgm", ".ppm", ".pnm"):
        if ext == ".pgm" and image.channels != 1:
            raise MediaError("PGM needs a single-channel image")
        if ext == ".ppm" and image.channels != 3:
            raise MediaError("PPM needs an RGB image")
        magic = b"P5" if image.channels == 1 else b"P6"
        with open(path, "wb") as f:
            f.write(b"%s\n%d %d\n255\n" % (magic, image.width, image.height))
            f.write(image.data.tobytes())
        return
    raise UnsupportedFormatError(f"cannot write {ext or 'extensionless'} files")


def image_to_tensor(image: ImageBuffer, normalize: bool = True, dtype=np.float32) -> np.ndarray:
    """Channel-first tensor; ``normalize`` maps [0, 255] to [0, 1]."""
    t = np.moveaxis(image.data, -1, 0).astype(dtype)
    if normalize:
        t /= t.dtype.type(255.0)
    return np.ascontiguousarray(t)


def tensor_to_image(t: np.ndarray, denormalize: bool = True) -> ImageBuffer:
    """Inverse of :func:`image_to_tensor`: clamp to [0, 255], round half to even."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3 or t.shape[0] not in (1, 3):
        raise MediaError(f"need a (1|3, H, W) tensor, got {t.shape}")
    if denormalize:
        t = t * 255.0
    px = np.rint(np.clip(t, 0.0, 255.0)).astype(np.uint8)
    return ImageBuffer(np.moveaxis(px, 0, -1))


def load_frames(dir_path, pattern: str = "*") -> FrameSequence:
    """Frames matching ``pattern`` (``*`` wildcard), in lexicographic filename order."""
    dir_path = Path(dir_path)
    if not dir_path.is_dir():
        raise MediaError(f"{dir_path} is not a directory")
    names = sorted(n for n in os.listdir(dir_path)
                   if fnmatch.fnmatchcase(n, pattern) and (dir_path / n).is_file())
    if not names:
        raise MediaError(f"no frames matching {pattern!r} in {dir_path}")
    return FrameSequence([load_image(dir_path / n) for n in names], names=names)


def frames_to_tensor(seq: FrameSequence, normalize: bool = True, dtype=np.float32) -> np.ndarray:
    """``(C, T, H, W)`` volume."""
    return np.ascontiguousarray(np.stack([image_to_tensor(f, normalize, dtype) for f in seq.frames], axis=1))


def tensor_to_frames(t: np.ndarray, denormalize: bool = True) -> FrameSequence:
    return FrameSequence([tensor_to_image(t[:, i], denormalize) for i in range(t.shape[1])])
