"""Empirical checks of measurement-matrix conditions and the decoder error bound.

Sampling checkers (RIP, REC, S-REC) draw random test vectors and count how
many violate the condition; they are statistical, not certificates.  At toy
sizes the exhaustive variants enumerate supports and sign patterns, and
:func:`restricted_singular_range` gives exact restricted singular values.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import make_rng
from .errors import ScaleLimitError
from .genmodel import GeneratorNetwork, forward
from .recover import check_oracle_scale, latent_grid, oracle_decode
from .sensing import SensingEnsemble

__all__ = [
    "PropertyReport",
    "BoundConstants",
    "Lemma1Report",
    "check_rip",
    "check_rec",
    "check_srec",
    "srec_differences",
    "sparse_unit_vectors",
    "exhaustive_sparse_vectors",
    "restricted_singular_range",
    "certified_alpha",
    "bound_constants",
    "sigma_lG",
    "check_lemma1_bound",
    "EXHAUSTIVE_MAX_N",
]

EXHAUSTIVE_MAX_N = 12


@dataclass
class PropertyReport:
    """Violation counts for one sampled matrix property.

    ``worst_ratio`` is the observed ``||A v|| / ||v||`` that came closest to
    (or furthest past) the bound: the ratio furthest from 1 for RIP and the
    smallest ratio for REC and S-REC.  ``verdicts`` holds the per-trial pass
    flags in sampling order.
    """

    property: str
    parameters: dict
    trials: int
    violations: int
    worst_ratio: float
    verdicts: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if not 0 <= self.violations <= self.trials:
            raise ValueError("violations must lie in [0, trials]")

    @property
    def satisfied_fraction(self) -> float:
        return 1.0 - self.violations / self.trials if self.trials else 1.0

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "property": self.property,
            "parameters": dict(self.parameters),
            "trials": self.trials,
            "violations": self.violations,
            "satisfied_fraction": self.satisfied_fraction,
            "worst_ratio": self.worst_ratio,
        }


def _matrix(a) -> np.ndarray:
    if isinstance(a, SensingEnsemble):
        return a.matrix
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def sparse_unit_vectors(n: int, l: int, count: int, seed: int = 0, stream: str = "sparse") -> np.ndarray:
    """``count`` random ``l``-sparse unit vectors: uniform support, Gaussian values."""
    if not 1 <= l <= n:
        raise ValueError(f"sparsity l={l} must lie in [1, n={n}]")
    rng = make_rng(seed, stream, n, l)
    supports = np.argsort(rng.uniform(size=(count, n)), axis=1)[:, :l]
    vals = rng.normal(size=(count, l))
    v = np.zeros((count, n))
    np.put_along_axis(v, supports, vals, axis=1)
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return v / norms


def exhaustive_sparse_vectors(n: int, l: int) -> np.ndarray:
    """Every support of size ``l`` times every sign pattern, normalised.

    Sign patterns are fixed up to a global sign (``v`` and ``-v`` have equal
    ratios), giving ``C(n, l) * 2**(l-1)`` rows.
    """
    if n > EXHAUSTIVE_MAX_N:
        raise ScaleLimitError(f"exhaustive enumeration needs n <= {EXHAUSTIVE_MAX_N}, got {n}")
    if not 1 <= l <= n:
        raise ValueError(f"sparsity l={l} must lie in [1, n={n}]")
    rows = []
    signs = [(1.0,) + s for s in itertools.product((1.0, -1.0), repeat=l - 1)]
    for support in itertools.combinations(range(n), l):
        for sg in signs:
            v = np.zeros(n)
            v[list(support)] = sg
            rows.append(v / math.sqrt(l))
    return np.array(rows)


def _ratios(a: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    num = np.linalg.norm(vectors @ a.T, axis=1)
    den = np.linalg.norm(vectors, axis=1)
    out = np.ones_like(num)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


def _test_vectors(a, l, trials, seed, exhaustive, vectors, stream):
    n = a.shape[1]
    if l > n:
        raise ValueError(f"sparsity l={l} exceeds n={n}")
    if vectors is not None:
        v = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        if v.shape[1] != n:
            raise ValueError(f"test vectors have length {v.shape[1]}, expected {n}")
        return v
    if exhaustive:
        return exhaustive_sparse_vectors(n, l)
    return sparse_unit_vectors(n, l, trials, seed, stream)


def check_rip(a, l: int, alpha: float, trials: int = 1000, seed: int = 0, *,
              exhaustive: bool = False, vectors=None) -> PropertyReport:
    """Count sampled ``l``-sparse ``v`` with ``||A v||`` outside ``[(1-alpha), (1+alpha)] ||v||``."""
    a = _matrix(a)
    v = _test_vectors(a, l, trials, seed, exhaustive, vectors, "rip")
    r = _ratios(a, v)
    ok = (r >= 1.0 - alpha) & (r <= 1.0 + alpha)
    worst = float(r[np.argmax(np.abs(r - 1.0))])
    return PropertyReport("rip", {"l": l, "alpha": alpha}, len(r), int(np.sum(~ok)), worst, ok)


def check_rec(a, l: int, gamma: float, trials: int = 1000, seed: int = 0, *,
              exhaustive: bool = False, vectors=None) -> PropertyReport:
    """Count sampled ``l``-sparse ``v`` with ``||A v|| < gamma ||v||``."""
    a = _matrix(a)
    v = _test_vectors(a, l, trials, seed, exhaustive, vectors, "rec")
    r = _ratios(a, v)
    ok = r >= gamma
    return PropertyReport("rec", {"l": l, "gamma": gamma}, len(r), int(np.sum(~ok)), float(np.min(r)), ok)


def srec_differences(g: GeneratorNetwork, l: int, trials: int, seed: int = 0) -> np.ndarray:
    """Differences ``x1 - x2`` of random members ``G(z) + nu`` of the sparse-deviation set.

    ``z ~ N(0, I)`` and ``nu`` is ``l``-sparse with standard normal values.
    """
    n = g.n
    rng = make_rng(seed, "srec")
    if l > n:
        raise ValueError(f"sparsity l={l} exceeds n={n}")

    def members(tag):
        z = rng.spawn(tag, "z").normal(size=(trials, g.k))
        sub = rng.spawn(tag, "nu")
        nu = np.zeros((trials, n))
        if l > 0:
            supp = np.argsort(sub.uniform(size=(trials, n)), axis=1)[:, :l]
            np.put_along_axis(nu, supp, sub.normal(size=(trials, l)), axis=1)
        return forward(g, z) + nu

    return members(1) - members(2)


def check_srec(a, g: GeneratorNetwork, l: int, gamma: float, delta: float, trials: int = 1000,
               seed: int = 0) -> PropertyReport:
    """Count sampled pairs with ``||A (x1 - x2)|| < gamma ||x1 - x2|| - delta``.

    Pairs are drawn by :func:`srec_differences`; with the zero generator the
    differences are ``2l``-sparse, so ``check_rec(A, 2l, gamma,
    vectors=srec_differences(...))`` gives the same verdicts when ``delta=0``.
    """
    a = _matrix(a)
    if g.n != a.shape[1]:
        raise ValueError(f"generator output dim {g.n} does not match matrix columns {a.shape[1]}")
    d = srec_differences(g, l, trials, seed)
    num = np.linalg.norm(d @ a.T, axis=1)
    den = np.linalg.norm(d, axis=1)
    ok = num >= gamma * den - delta
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
    return PropertyReport("srec", {"l": l, "gamma": gamma, "delta": delta}, trials,
                          int(np.sum(~ok)), float(np.min(r)), ok)


def restricted_singular_range(a, s: int) -> tuple[float, float]:
    """Exact ``(min sigma_min, max sigma_max)`` over all ``s``-column submatrices."""
    a = _matrix(a)
    n = a.shape[1]
    if n > EXHAUSTIVE_MAX_N:
        raise ScaleLimitError(f"exhaustive enumeration needs n <= {EXHAUSTIVE_MAX_N}, got {n}")
    if not 1 <= s <= n:
        raise ValueError(f"subset size {s} must lie in [1, {n}]")
    lo, hi = math.inf, 0.0
    for cols in itertools.combinations(range(n), s):
        sv = np.linalg.svd(a[:, cols], compute_uv=False)
        smin = sv[-1] if len(sv) == s else 0.0
        lo, hi = min(lo, smin), max(hi, sv[0])
    return float(lo), float(hi)


def certified_alpha(a, l: int) -> float:
    """Smallest ``alpha`` with RIP(2l, alpha) and REC over ``3l``-sparse vectors with ``1 - alpha``.

    For the zero generator the second condition is S-REC over differences of
    ``1.5l``-sparse members with ``delta = 0``.  Exact by enumeration, so only
    for ``n <= 12``.  Returns a value ``>= 1`` when no valid ``alpha`` exists.
    """
    a = _matrix(a)
    n = a.shape[1]
    lo2, hi2 = restricted_singular_range(a, min(2 * l, n))
    lo3, _ = restricted_singular_range(a, min(3 * l, n))
    return max(1.0 - lo2, hi2 - 1.0, 1.0 - lo3)


@dataclass(frozen=True)
class BoundConstants:
    alpha: float
    delta: float
    c0: float
    c1: float
    delta_prime: float


def bound_constants(alpha: float, delta: float = 0.0) -> BoundConstants:
    """Decoder-bound constants ``C0 = 2((1+a)/(1-a) + 1)``, ``C1 = 2/(1-a)``, ``delta' = delta/(1-a)``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    inv = 1.0 / (1.0 - alpha)
    return BoundConstants(alpha, delta, 2.0 * ((1.0 + alpha) * inv + 1.0), 2.0 * inv, delta * inv)


def sigma_lG(x, g: GeneratorNetwork, l: int, *, grid_points: int = 21, span: float = 3.0) -> float:
    """Least l1 distance from ``x`` to ``{G(z) + nu : z on the latent grid, ||nu||_0 <= l}``.

    For a fixed ``z`` the best ``nu`` cancels the ``l`` largest residual
    entries, so the distance is the sum of the ``n - l`` smallest magnitudes.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if g.n != n:
        raise ValueError(f"generator output dim {g.n} does not match signal length {n}")
    if l < 0:
        raise ValueError("l must be nonnegative")
    check_oracle_scale(n, 0, g)
    if l >= n:
        return 0.0
    centers = forward(g, latent_grid(g, grid_points, span))
    mags = np.sort(np.abs(x[None, :] - centers), axis=1)
    return float(np.min(np.sum(mags[:, : n - l], axis=1)))


@dataclass
class Lemma1Report:
    trials: int
    violations: int
    tube_violations: int
    worst_slack: float
    constants: BoundConstants
    eps_max: float
    rows: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        c = self.constants
        return {
            "property": "lemma1",
            "trials": self.trials,
            "violations": self.violations,
            "tube_violations": self.tube_violations,
            "worst_slack": self.worst_slack,
            "eps_max": self.eps_max,
            "constants": {"alpha": c.alpha, "delta": c.delta, "c0": c.c0, "c1": c.c1,
                          "delta_prime": c.delta_prime},
        }


def check_lemma1_bound(e: SensingEnsemble, g: GeneratorNetwork, l: int, alpha_measured: float,
                       delta: float = 0.0, trials: int = 100, seed: int = 0, eps_max: float = 0.0, *,
                       dense_scale: float = 0.2, tol: float = 1e-6) -> Lemma1Report:
    """Test the decoder bound ``||x - D(Ax + e)|| <= C0 sigma / sqrt(2l) + C1 eps_max + delta'``.

    Each trial draws ``x = G(z) + nu + rho w`` with ``z`` a latent grid point,
    ``nu`` ``l``-sparse, and a dense perturbation ``rho w`` (``rho`` uniform in
    ``[0, dense_scale]``) so that ``sigma_lG(x)`` is usually positive.  The
    noise has a uniform random direction and norm uniform in ``[0, eps_max]``.
    ``D`` is :func:`~sparsegen.recover.oracle_decode`.  Also counts trials
    where ``||A (x - D(y))|| > 2 eps_max``.  Comparisons allow ``tol``
    relative slack for solver round-off.
    """
    a = e.matrix
    n = e.n
    if l < 1:
        raise ValueError("the bound needs l >= 1")
    check_oracle_scale(n, l, g)
    const = bound_constants(alpha_measured, delta)
    grid = latent_grid(g)
    rows = []
    violations = tube_bad = 0
    worst = -math.inf
    for t in range(trials):
        rng = make_rng(seed, "lemma1", t)
        z = grid[rng.integers(0, len(grid))]
        x = forward(g, z)
        supp = rng.choice(n, size=l, replace=False)
        x[supp] += rng.normal(size=l)
        w = rng.normal(size=n)
        x += rng.uniform(0.0, dense_scale) * w / np.linalg.norm(w)
        noise = rng.normal(size=e.m)
        noise *= rng.uniform(0.0, eps_max) / max(np.linalg.norm(noise), 1e-300)
        y = a @ x + noise
        x_dec = oracle_decode(e, y, g, l, eps_max)
        sig = sigma_lG(x, g, l)
        lhs = float(np.linalg.norm(x - x_dec))
        rhs = const.c0 * sig / math.sqrt(2 * l) + const.c1 * eps_max + const.delta_prime
        tube = float(np.linalg.norm(a @ (x - x_dec)))
        bad = lhs > rhs + tol * (1.0 + rhs)
        tube_fail = tube > 2 * eps_max + tol * (1.0 + np.linalg.norm(y))
        violations += bad
        tube_bad += tube_fail
        worst = max(worst, lhs - rhs)
        rows.append({"trial": t, "lhs": lhs, "rhs": rhs, "sigma": sig, "tube": tube})
    return Lemma1Report(trials, int(violations), int(tube_bad), float(worst), const, eps_max, rows)
