"""Orthonormal change-of-basis matrices for sparse deviations.

Bases are stored as dense ``n x n`` matrices ``B`` with orthonormal rows, so
``apply`` computes analysis coefficients ``B v`` and ``apply_inverse``
synthesises with ``B.T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import as_signal

__all__ = [
    "OrthonormalBasis",
    "identity_basis",
    "dct_basis",
    "haar_basis",
    "padded_haar_basis",
    "kron_basis",
    "make_basis",
    "apply",
    "apply_inverse",
    "BASIS_KINDS",
]

BASIS_KINDS = ("identity", "dct", "haar")


@dataclass(frozen=True)
class OrthonormalBasis:
    matrix: np.ndarray
    kind: str

    def __post_init__(self):
        b = np.array(self.matrix, dtype=np.float64, order="C")
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError(f"basis matrix must be square, got shape {b.shape}")
        b.setflags(write=False)
        object.__setattr__(self, "matrix", b)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def orthonormality_error(self) -> float:
        """``max |B^T B - I|`` entrywise."""
        g = self.matrix.T @ self.matrix
        return float(np.max(np.abs(g - np.eye(self.n))))

    def forward(self, v: np.ndarray) -> np.ndarray:
        """``B v`` for a vector or for each row of a 2-D batch."""
        if self.is_identity:
            return v
        return v @ self.matrix.T

    def inverse(self, c: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return c
        return c @ self.matrix


def identity_basis(n: int) -> OrthonormalBasis:
    if n < 1:
        raise ValueError(f"basis size must be positive, got {n}")
    return OrthonormalBasis(np.eye(n), "identity")


def dct_basis(n: int) -> OrthonormalBasis:
    """Orthonormal DCT-II: row ``j``, column ``i`` is ``c_j cos(pi (2i+1) j / 2n)``."""
    if n < 1:
        raise ValueError(f"basis size must be positive, got {n}")
    i = np.arange(n)
    j = i[:, None]
    b = math.sqrt(2.0 / n) * np.cos(np.pi * (2 * i[None, :] + 1) * j / (2 * n))
    b[0, :] = 1.0 / math.sqrt(n)
    return OrthonormalBasis(b, "dct")


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _haar_matrix(n: int) -> np.ndarray:
    # H_{2k} = [H_k kron (1, 1); I_k kron (1, -1)] / sqrt(2), coarse rows first
    h = np.ones((1, 1))
    while h.shape[0] < n:
        k = h.shape[0]
        top = np.kron(h, [1.0, 1.0])
        bottom = np.kron(np.eye(k), [1.0, -1.0])
        h = np.vstack([top, bottom]) / math.sqrt(2.0)
    return h


def haar_basis(n: int) -> OrthonormalBasis:
    """Full-depth orthonormal Haar matrix; ``n`` must be a power of two."""
    if not _is_pow2(n):
        raise ValueError(f"Haar basis needs a power-of-two size, got {n}")
    return OrthonormalBasis(_haar_matrix(n), "haar")


def padded_haar_basis(n: int) -> OrthonormalBasis:
    """Haar-like orthonormal basis for sizes that are not powers of two.

    The signal is conceptually zero-padded symmetrically to the next power of
    two ``N``; the ``n`` Haar rows carrying the most energy on the original
    ``n`` positions are kept (coarse-to-fine order preserved) and then
    re-orthonormalised with a QR factorisation, so coarse rows change least.
    """
    if _is_pow2(n):
        return haar_basis(n)
    big = 1 << (n - 1).bit_length()
    pad = (big - n) // 2
    h = _haar_matrix(big)[:, pad : pad + n]
    energy = np.sum(h * h, axis=1)
    keep = np.sort(np.argsort(-energy, kind="stable")[:n])
    sub = h[keep]
    q, r = np.linalg.qr(sub.T)
    q = q * np.sign(np.diag(r))[None, :]
    return OrthonormalBasis(q.T, "haar")


def kron_basis(b1: OrthonormalBasis) -> OrthonormalBasis:
    """Separable 2-D basis ``B1 kron B1`` acting on row-major flattened images."""
    return OrthonormalBasis(np.kron(b1.matrix, b1.matrix), b1.kind)


def make_basis(kind: str, n: int, *, image: bool | None = None) -> OrthonormalBasis:
    """Build a basis by name.

    For ``dct`` and ``haar`` with ``n`` a perfect square (e.g. 784 = 28x28) the
    basis is the separable 2-D transform over the square image unless
    ``image=False``.  Non-power-of-two Haar sides use :func:`padded_haar_basis`.
    """
    if kind not in BASIS_KINDS:
        raise ValueError(f"unknown basis kind {kind!r}; expected one of {BASIS_KINDS}")
    if kind == "identity":
        return identity_basis(n)
    side = math.isqrt(n)
    as_image = side * side == n and side > 1 if image is None else image
    if as_image and side * side != n:
        raise ValueError(f"n={n} is not a square image size")
    if kind == "dct":
        return kron_basis(dct_basis(side)) if as_image else dct_basis(n)
    if as_image:
        return kron_basis(padded_haar_basis(side))
    return haar_basis(n)


def apply(b: OrthonormalBasis, v) -> np.ndarray:
    """Coefficients ``B v``."""
    v = as_signal(v, "v")
    if v.shape[-1] != b.n:
        raise ValueError(f"vector length {v.shape[-1]} does not match basis size {b.n}")
    return b.matrix @ v if v.ndim == 1 else b.forward(v)


def apply_inverse(b: OrthonormalBasis, c) -> np.ndarray:
    """Synthesis ``B^T c``."""
    c = as_signal(c, "c")
    if c.shape[-1] != b.n:
        raise ValueError(f"vector length {c.shape[-1]} does not match basis size {b.n}")
    return b.matrix.T @ c if c.ndim == 1 else b.inverse(c)
