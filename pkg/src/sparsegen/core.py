"""Shared numeric primitives: norms, thresholding, clipping and seeded streams.

Everything here works on float64 numpy arrays.  Random streams are built on
numpy's Philox counter-based generator keyed by ``(seed, stream)`` so that
independent consumers (restarts, trials, noise draws) get reproducible,
non-overlapping sequences regardless of the order they are created in.
"""

from __future__ import annotations

import hashlib
import struct
from typing import Hashable

import numpy as np

__all__ = [
    "as_signal",
    "norm",
    "soft_threshold",
    "clip_to_box",
    "derive_seed",
    "SeededRng",
    "make_rng",
]

_MASK64 = (1 << 64) - 1


def as_signal(v, name: str = "signal") -> np.ndarray:
    """Return ``v`` as a finite float64 array, raising on NaN/inf or empty input."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def norm(v, p) -> float:
    """l1, l2 or l-infinity norm of a vector.

    ``p`` may be ``1``, ``2``, ``np.inf`` or one of the strings ``"l1"``,
    ``"l2"``, ``"inf"``/``"linf"``.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    key = str(p).lower()
    if key in ("1", "l1"):
        return float(np.sum(np.abs(v)))
    if key in ("2", "l2"):
        return float(np.sqrt(np.dot(v, v)))
    if key in ("inf", "linf", "l_inf"):
        return float(np.max(np.abs(v))) if v.size else 0.0
    raise ValueError(f"unsupported norm order {p!r}; expected 1, 2 or inf")


def soft_threshold(v, t: float) -> np.ndarray:
    """Elementwise ``sign(v) * max(|v| - t, 0)``, the prox of ``t*||.||_1``."""
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def clip_to_box(v, lo: float, hi: float) -> np.ndarray:
    """Project onto the box ``[lo, hi]^n``."""
    if lo > hi:
        raise ValueError(f"empty box: lo={lo} > hi={hi}")
    return np.clip(np.asarray(v, dtype=np.float64), lo, hi)


def _encode_part(part: Hashable) -> bytes:
    if isinstance(part, bool):
        return b"b" + (b"1" if part else b"0")
    if isinstance(part, (int, np.integer)):
        return b"i" + str(int(part)).encode()
    if isinstance(part, (float, np.floating)):
        return b"f" + struct.pack("<d", float(part))
    if isinstance(part, str):
        return b"s" + part.encode("utf-8")
    if isinstance(part, tuple):
        return b"t(" + b",".join(_encode_part(p) for p in part) + b")"
    raise TypeError(f"cannot derive a seed from {type(part).__name__}")


def derive_seed(*parts: Hashable) -> int:
    """Hash an ordered tuple of ints/strings/floats into a stable 64-bit seed.

    Uses BLAKE2b so the mapping is identical across platforms and Python
    versions (unlike ``hash()``).
    """
    h = hashlib.blake2b(digest_size=8, person=b"sparsegen")
    for p in parts:
        enc = _encode_part(p)
        h.update(struct.pack("<I", len(enc)))
        h.update(enc)
    return int.from_bytes(h.digest(), "little")


class SeededRng:
    """A reproducible random stream identified by ``(seed, stream)``.

    ``stream`` may be any value accepted by :func:`derive_seed`; distinct
    streams under the same seed are statistically independent.  The
    underlying bit generator is Philox-4x64, whose 128-bit key is
    ``(seed, derive_seed(stream))``.
    """

    algorithm = "philox4x64"

    def __init__(self, seed: int, stream: Hashable = 0):
        if not isinstance(seed, (int, np.integer)) or seed < 0 or seed > _MASK64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        self.seed = int(seed)
        self.stream = stream
        key = np.array([self.seed, derive_seed("stream", stream)], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def spawn(self, *stream: Hashable) -> "SeededRng":
        """Child stream keyed by this stream's identity plus ``stream``."""
        return SeededRng(self.seed, (self.stream,) + tuple(stream))

    def normal(self, size=None, scale: float = 1.0) -> np.ndarray:
        return self.generator.normal(0.0, scale, size=size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size=size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def choice(self, a, size=None, replace=True):
        return self.generator.choice(a, size=size, replace=replace)

    def permutation(self, x):
        return self.generator.permutation(x)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, stream={self.stream!r})"


def make_rng(seed: int, *stream: Hashable) -> SeededRng:
    """Shorthand for ``SeededRng(seed, stream)`` with a variadic stream id."""
    return SeededRng(seed, tuple(stream) if len(stream) != 1 else stream[0])
