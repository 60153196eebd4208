"""Raster primitives shared by every stage of the pipeline.

Images are plain ``numpy`` arrays of shape ``(height, width)`` and dtype
``uint8``.  All functions here are pure: they never mutate their inputs and
are safe to call concurrently.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage


class ImageError(Exception):
    """Base class for raster-level failures."""


class EmptyMaskError(ImageError):
    """Distance transform requested for a mask with no set pixel."""


class TooSmallError(ImageError):
    """Image too small for the requested operation."""


class OutOfBoundsError(ImageError):
    """A rectangle does not intersect the image at all."""


@dataclass(frozen=True)
class Rect:
    """Integer pixel rectangle: top-left corner plus extent."""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"Rect extent must be >= 1, got {self.w}x{self.h}")

    @property
    def x1(self) -> int:
        return self.x0 + self.w

    @property
    def y1(self) -> int:
        return self.y0 + self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x0 + (self.w - 1) / 2.0, self.y0 + (self.h - 1) / 2.0)

    def contains(self, x: int, y: int) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1

    def clamped(self, width: int, height: int) -> "Rect | None":
        """Intersection with the image bounds, or None if empty."""
        x0 = max(self.x0, 0)
        y0 = max(self.y0, 0)
        x1 = min(self.x1, width)
        y1 = min(self.y1, height)
        if x1 <= x0 or y1 <= y0:
            return None
        return Rect(x0, y0, x1 - x0, y1 - y0)

    def intersects(self, other: "Rect") -> bool:
        return (self.x0 < other.x1 and other.x0 < self.x1
                and self.y0 < other.y1 and other.y0 < self.y1)


def as_gray(a) -> np.ndarray:
    """Validate and normalize an array into the canonical image form."""
    img = np.asarray(a)
    if img.ndim != 2:
        raise ImageError(f"expected a 2-D image, got ndim={img.ndim}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ImageError("image must be at least 1x1")
    if img.dtype != np.uint8:
        if np.issubdtype(img.dtype, np.integer) and img.min() >= 0 and img.max() <= 255:
            img = img.astype(np.uint8)
        else:
            raise ImageError(f"expected uint8 intensities, got dtype={img.dtype}")
    return np.ascontiguousarray(img)


def distance_transform(mask: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance to the nearest set pixel of ``mask``.

    Returns a float64 field of the same shape; zero exactly at set pixels.
    """
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise ImageError("mask must be 2-D")
    if not m.any():
        raise EmptyMaskError("distance transform of an empty mask")
    return ndimage.distance_transform_edt(~m)


def downsample2(img: np.ndarray) -> np.ndarray:
    """Halve each dimension by 2x2 block means (floor; truncated blocks
    averaged over the pixels actually present)."""
    img = as_gray(img)
    h, w = img.shape
    if h < 2 or w < 2:
        raise TooSmallError(f"cannot downsample a {w}x{h} image")
    ys = np.arange(0, h, 2)
    xs = np.arange(0, w, 2)
    sums = np.add.reduceat(np.add.reduceat(img.astype(np.int64), ys, axis=0), xs, axis=1)
    bh = np.minimum(ys + 2, h) - ys
    bw = np.minimum(xs + 2, w) - xs
    counts = np.outer(bh, bw)
    return (sums // counts).astype(np.uint8)


def crop(img: np.ndarray, r: Rect) -> tuple[np.ndarray, Rect]:
    """Copy of the window ``r`` clamped to the image; returns the window and
    the effective Rect actually used."""
    img = as_gray(img)
    h, w = img.shape
    eff = r.clamped(w, h)
    if eff is None:
        raise OutOfBoundsError(f"rect {r} does not intersect a {w}x{h} image")
    return img[eff.y0:eff.y1, eff.x0:eff.x1].copy(), eff


# ---------------------------------------------------------------------------
# Image I/O.  PGM (P5, maxval 255) is the native format; PNG support is
# optional and only active when Pillow is importable.

def load_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s", data)
    if not m:
        raise ImageError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = int(m.group(1)), int(m.group(2)), int(m.group(3))
    if maxval != 255:
        raise ImageError(f"{path}: only maxval 255 PGM supported, got {maxval}")
    pixels = data[m.end():m.end() + w * h]
    if len(pixels) < w * h:
        raise ImageError(f"{path}: truncated PGM payload")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w).copy()


def save_pgm(path, img: np.ndarray) -> None:
    img = as_gray(img)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def _luma(rgb: np.ndarray) -> np.ndarray:
    r = rgb[..., 0].astype(np.int64)
    g = rgb[..., 1].astype(np.int64)
    b = rgb[..., 2].astype(np.int64)
    return ((299 * r + 587 * g + 114 * b) // 1000).astype(np.uint8)


def load_image(path) -> np.ndarray:
    """Load a PGM, or (when Pillow is available) an 8-bit PNG; color inputs
    are converted by integer luma."""
    p = Path(path)
    if p.suffix.lower() in (".pgm", ".ppm"):
        return load_pgm(p)
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - optional dependency
        raise ImageError(f"{path}: non-PGM input needs Pillow installed") from exc
    with Image.open(p) as im:
        arr = np.asarray(im)
    if arr.ndim == 2:
        return as_gray(arr)
    if arr.ndim == 3 and arr.shape[2] >= 3:
        return _luma(arr)
    raise ImageError(f"{path}: unsupported image layout {arr.shape}")


def save_image(path, img: np.ndarray) -> None:
    p = Path(path)
    if p.suffix.lower() == ".pgm":
        save_pgm(p, img)
        return
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - optional dependency
        raise ImageError(f"{path}: non-PGM output needs Pillow installed") from exc
    Image.fromarray(as_gray(img)).save(p)
