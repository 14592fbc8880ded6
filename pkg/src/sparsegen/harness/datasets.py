"""Image datasets: IDX container I/O, binarisation, MNIST and procedural glyphs.

Images are flattened row-major to length ``rows * cols`` with intensities in
``[0, 1]``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import make_rng
from ..errors import BadMagicError, ShapeMismatchError, TruncatedFileError

__all__ = [
    "Dataset",
    "IDX_UBYTE_3D",
    "load_idx",
    "read_idx_array",
    "write_idx",
    "binarize",
    "mnist_images",
    "glyph_images",
    "split",
]

IDX_UBYTE_3D = 0x00000803
_DOMAINS = ("continuous", "binary")


@dataclass(frozen=True)
class Dataset:
    name: str
    images: np.ndarray
    domain: str = "continuous"

    def __post_init__(self):
        imgs = np.array(self.images, dtype=np.float64)
        if imgs.ndim != 2 or imgs.shape[0] == 0:
            raise ValueError("images must be a non-empty 2-D array of flattened images")
        if self.domain not in _DOMAINS:
            raise ValueError(f"domain must be one of {_DOMAINS}, got {self.domain!r}")
        if np.any(imgs < 0) or np.any(imgs > 1) or not np.all(np.isfinite(imgs)):
            raise ValueError("pixel values must lie in [0, 1]")
        if self.domain == "binary" and not np.all((imgs == 0) | (imgs == 1)):
            raise ValueError("binary dataset contains values other than 0 and 1")
        imgs.setflags(write=False)
        object.__setattr__(self, "images", imgs)

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def n(self) -> int:
        return self.images.shape[1]

    def subset(self, indices) -> "Dataset":
        return Dataset(self.name, self.images[np.asarray(indices)], self.domain)


def read_idx_array(path) -> np.ndarray:
    """Raw ``uint8`` array from a 3-D unsigned-byte IDX file (shape ``(count, rows, cols)``)."""
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise TruncatedFileError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", data[:4])
    if magic != IDX_UBYTE_3D:
        raise BadMagicError(f"{path}: magic 0x{magic:08x}, expected 0x{IDX_UBYTE_3D:08x}")
    if len(data) < 16:
        raise TruncatedFileError(f"{path}: header truncated")
    dims = struct.unpack(">III", data[4:16])
    expected = math.prod(dims)
    payload = len(data) - 16
    if payload < expected:
        raise TruncatedFileError(f"{path}: payload has {payload} bytes, dims {dims} need {expected}")
    if payload > expected:
        raise ShapeMismatchError(f"{path}: {payload - expected} bytes beyond dims {dims}")
    return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(dims)


def binarize(images, threshold: float = 0.5) -> np.ndarray:
    """``1`` where the intensity is at least ``threshold``, else ``0``."""
    return (np.asarray(images, dtype=np.float64) >= threshold).astype(np.float64)


def load_idx(path, *, binarize_pixels: bool = False, name: str | None = None,
             image_shape: tuple[int, int] | None = None) -> Dataset:
    """Load an IDX image file, scaling bytes by ``1/255``.

    ``image_shape`` (rows, cols), when given, must match the file's dims.
    With ``binarize_pixels`` the scaled values are thresholded at 0.5.
    """
    raw = read_idx_array(path)
    if image_shape is not None and tuple(raw.shape[1:]) != tuple(image_shape):
        raise ShapeMismatchError(f"{path}: images are {raw.shape[1:]}, expected {tuple(image_shape)}")
    imgs = raw.reshape(raw.shape[0], -1).astype(np.float64) / 255.0
    if binarize_pixels:
        imgs = binarize(imgs)
    return Dataset(name or Path(path).stem, imgs, "binary" if binarize_pixels else "continuous")


def write_idx(path, images, side: int | None = None) -> None:
    """Write flattened ``[0, 1]`` images (or ``uint8`` arrays) as a 3-D IDX file."""
    arr = np.asarray(images)
    if arr.ndim == 2:
        side = side or math.isqrt(arr.shape[1])
        if side * side != arr.shape[1]:
            raise ValueError(f"cannot infer a square image side from length {arr.shape[1]}")
        arr = arr.reshape(arr.shape[0], side, side)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(np.asarray(arr, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    header = struct.pack(">IIII", IDX_UBYTE_3D, *arr.shape)
    Path(path).write_bytes(header + np.ascontiguousarray(arr).tobytes())


def mnist_images() -> np.ndarray:
    """The 5000-digit MNIST sample bundled with ``mlxtend``, scaled to ``[0, 1]``."""
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:  # pragma: no cover - optional extra
        raise ImportError("MNIST loading needs the 'data' extra (pip install sparsegen[data])") from exc
    x, _ = mnist_data()
    return np.asarray(x, dtype=np.float64) / 255.0


def split(images, n_test: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle, then ``(train, test)`` with the last ``n_test`` images as test."""
    images = np.asarray(images)
    if not 0 < n_test < len(images):
        raise ValueError(f"n_test must lie in (0, {len(images)})")
    order = make_rng(seed, "split").permutation(len(images))
    return images[order[:-n_test]], images[order[-n_test:]]


def _draw_stroke(canvas, pts, radius):
    side = canvas.shape[0]
    yy, xx = np.mgrid[0:side, 0:side]
    for p, q in zip(pts[:-1], pts[1:]):
        d = q - p
        ln2 = float(d @ d) or 1.0
        t = np.clip(((xx - p[0]) * d[0] + (yy - p[1]) * d[1]) / ln2, 0.0, 1.0)
        dist2 = (xx - p[0] - t * d[0]) ** 2 + (yy - p[1] - t * d[1]) ** 2
        canvas[dist2 <= radius * radius] = 1.0


def _bezier(ctrl, samples=24):
    t = np.linspace(0.0, 1.0, samples)[:, None]
    if len(ctrl) == 3:
        return (1 - t) ** 2 * ctrl[0] + 2 * (1 - t) * t * ctrl[1] + t**2 * ctrl[2]
    return (1 - t) ** 3 * ctrl[0] + 3 * (1 - t) ** 2 * t * ctrl[1] + 3 * (1 - t) * t**2 * ctrl[2] + t**3 * ctrl[3]


def glyph_images(count: int, seed: int = 0, side: int = 28) -> np.ndarray:
    """Binary handwritten-character-like glyphs drawn from random pen strokes.

    Each glyph has 1 to 4 strokes; a stroke is a quadratic or cubic Bezier
    curve (or a straight segment) inside a margin of 3 pixels, rasterised
    with a pen radius between 0.9 and 1.5 pixels.  Deterministic in ``seed``.
    """
    if count < 1:
        raise ValueError("count must be positive")
    out = np.zeros((count, side * side))
    lo, hi = 3.0, side - 4.0
    for i in range(count):
        rng = make_rng(seed, "glyph", i)
        canvas = np.zeros((side, side))
        radius = rng.uniform(0.9, 1.5)
        for _ in range(int(rng.integers(1, 5))):
            kind = int(rng.integers(0, 3))
            ctrl = rng.uniform(lo, hi, size=(kind + 2, 2))
            pts = ctrl if kind == 0 else _bezier(ctrl)
            _draw_stroke(canvas, pts, radius)
        out[i] = canvas.ravel()
    return out
