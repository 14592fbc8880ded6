"""Measurement ensembles and simulated acquisition ``y = A x + eps``."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import as_signal, make_rng
from .errors import BadMagicError, FormatError, ShapeMismatchError, TruncatedFileError

__all__ = [
    "SensingEnsemble",
    "gaussian_ensemble",
    "sense",
    "sufficient_measurements",
    "save_ensemble",
    "load_ensemble",
]

ENSEMBLE_MAGIC = b"CSEN"
ENSEMBLE_VERSION = 1
_HEADER = struct.Struct("<4sIQIId")


@dataclass(frozen=True)
class SensingEnsemble:
    """An ``m x n`` measurement matrix together with its noise model.

    ``noise_std`` is the per-measurement standard deviation of the additive
    Gaussian noise; ``seed`` records how the matrix was drawn.
    """

    matrix: np.ndarray
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        a = np.array(self.matrix, dtype=np.float64, order="C")
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"measurement matrix must be 2-D and non-empty, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("measurement matrix contains non-finite entries")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be nonnegative, got {self.noise_std}")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "noise_std", float(self.noise_std))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


def gaussian_ensemble(
    m: int,
    n: int,
    noise_std: float = 0.0,
    seed: int = 0,
    *,
    kind: str = "gaussian",
    entry_scale: str = "variance",
) -> SensingEnsemble:
    """Draw an i.i.d. random measurement ensemble.

    Parameters
    ----------
    m, n : int
        Number of measurements and signal dimension.
    noise_std : float
        Standard deviation of the additive measurement noise.
    seed : int
        Seed for the matrix stream.
    kind : {"gaussian", "bernoulli"}
        Gaussian entries, or equiprobable signs scaled to the same variance.
    entry_scale : {"variance", "std"}
        ``"variance"`` gives entries of variance ``1/m`` (the usual scaling
        for which ``E||A x||^2 = ||x||^2``).  ``"std"`` gives entries with
        standard deviation ``1/m``.
    """
    if m < 1 or n < 1:
        raise ValueError(f"ensemble dimensions must be positive, got m={m}, n={n}")
    if entry_scale == "variance":
        scale = 1.0 / math.sqrt(m)
    elif entry_scale == "std":
        scale = 1.0 / m
    else:
        raise ValueError(f"unknown entry_scale {entry_scale!r}")
    rng = make_rng(seed, "ensemble", kind)
    if kind == "gaussian":
        a = rng.normal(size=(m, n), scale=scale)
    elif kind == "bernoulli":
        a = np.where(rng.integers(0, 2, size=(m, n)) == 1, scale, -scale).astype(np.float64)
    else:
        raise ValueError(f"unknown ensemble kind {kind!r}")
    return SensingEnsemble(a, noise_std=noise_std, seed=seed)


def sense(e: SensingEnsemble, x, noise_seed: int = 0) -> np.ndarray:
    """Return ``A @ x + eps`` with ``eps ~ N(0, noise_std^2 I)`` drawn from ``noise_seed``."""
    x = as_signal(x, "x")
    if x.ndim != 1 or x.shape[0] != e.n:
        raise ValueError(f"signal length {x.shape} does not match ensemble with n={e.n}")
    y = e.matrix @ x
    if e.noise_std > 0:
        y = y + make_rng(noise_seed, "noise").normal(size=e.m, scale=e.noise_std)
    return y


def sufficient_measurements(
    k: float,
    l: float,
    n: float,
    lipschitz: float | None = None,
    radius: float | None = None,
    delta: float | None = None,
    alpha: float = 0.5,
    constant: float = 1.0,
    *,
    relu: bool = False,
    depth: int | None = None,
    width: int | None = None,
) -> int:
    """Measurement count sufficient for recovery over sparse deviations of a generator.

    Lipschitz form::

        ceil(C / alpha^2 * (k * ln(L r / delta) + l * ln(n / l)))

    ReLU-network form (``relu=True``, needs ``depth`` and ``width``)::

        ceil(C / alpha^2 * ((k + l) * depth * ln(width) + (k + l) * ln(n / l)))

    The asymptotic statement hides ``C``; it is explicit here.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    for name, val in (("k", k), ("l", l), ("n", n), ("constant", constant)):
        if val is None or val <= 0:
            raise ValueError(f"{name} must be positive, got {val}")
    if n / l <= 0:
        raise ValueError("n / l must be positive")
    sparse_term = math.log(n / l)
    if relu:
        if depth is None or width is None or depth < 1 or width < 1:
            raise ValueError("relu form needs positive depth and width")
        total = (k + l) * depth * math.log(width) + (k + l) * sparse_term
    else:
        if lipschitz is None or radius is None or delta is None:
            raise ValueError("Lipschitz form needs lipschitz, radius and delta")
        if lipschitz <= 0 or radius <= 0 or delta <= 0:
            raise ValueError("lipschitz, radius and delta must be positive")
        ratio = lipschitz * radius / delta
        if ratio <= 1:
            raise ValueError(f"L*r/delta must exceed 1 for a positive log, got {ratio}")
        total = k * math.log(ratio) + l * sparse_term
    # guard against 542.99999999 style round-off pushing ceil up or down
    return int(math.ceil(constant / alpha**2 * total - 1e-9))


def save_ensemble(e: SensingEnsemble, path) -> None:
    """Write the ``CSEN`` binary layout (little-endian, row-major f64 entries)."""
    header = _HEADER.pack(ENSEMBLE_MAGIC, ENSEMBLE_VERSION, e.seed & ((1 << 64) - 1), e.m, e.n, e.noise_std)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(e.matrix, dtype="<f8").tobytes())


def load_ensemble(path) -> SensingEnsemble:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != ENSEMBLE_MAGIC:
        raise BadMagicError(f"{path}: not a CSEN ensemble file")
    if len(data) < _HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated")
    _, version, seed, m, n, noise_std = _HEADER.unpack_from(data)
    if version != ENSEMBLE_VERSION:
        raise FormatError(f"{path}: unsupported CSEN version {version}")
    expected = _HEADER.size + 8 * m * n
    if len(data) < expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, found {len(data)}")
    if len(data) > expected:
        raise ShapeMismatchError(f"{path}: {len(data) - expected} trailing bytes after {m}x{n} payload")
    a = np.frombuffer(data, dtype="<f8", count=m * n, offset=_HEADER.size).reshape(m, n)
    return SensingEnsemble(a.astype(np.float64), noise_std=noise_std, seed=seed)
