"""Signal recovery: LASSO, generator-only, and Sparse-Gen (generator plus sparse deviation).

All three solve variations of

    min_{z, nu}  ||B nu||_1 + lam * ||A (G(z) + nu) - y||_2^2

LASSO fixes ``G = 0`` (solved with FISTA), generator-only recovery fixes
``nu = 0``, and Sparse-Gen optimises both.  The non-convex solvers run several
random restarts side by side (as rows of a batch) and keep the restart with
the smallest measurement error.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .adam import Adam
from .basis import OrthonormalBasis, identity_basis
from .core import as_signal, clip_to_box, make_rng, soft_threshold
from .errors import InfeasibleError, NumericalError, ScaleLimitError
from .genmodel import GeneratorNetwork, backprop, forward, forward_cached, spectral_norm
from .sensing import SensingEnsemble

__all__ = [
    "SolverConfig",
    "RecoveryResult",
    "MODES",
    "lasso",
    "lasso_objective",
    "gen_recover",
    "sparse_gen",
    "sparse_gen_objective",
    "oracle_decode",
    "latent_grid",
    "ORACLE_MAX_N",
    "ORACLE_MAX_L",
    "ORACLE_MAX_K",
]

MODES = ("alternating-prox", "joint-subgradient")

ORACLE_MAX_N = 12
ORACLE_MAX_L = 2
ORACLE_MAX_K = 2


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the restart-based non-convex solvers.

    ``lam`` weights the measurement misfit against the l1 deviation penalty.
    ``step_size`` is the Adam learning rate for the latent code (and for the
    deviation in joint mode).  In ``alternating-prox`` mode each iteration
    takes ``prox_steps`` exact proximal-gradient steps on the deviation and
    one Adam step on the latent code.
    """

    lam: float = 100.0
    step_size: float = 0.01
    iterations: int = 1000
    restarts: int = 10
    mode: str = "alternating-prox"
    clip_lo: float = 0.0
    clip_hi: float = 1.0
    project_latent_radius: float | None = None
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    prox_steps: int = 1
    z_init_std: float = 1.0
    warm_start_gen: bool = False

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.iterations < 0 or self.prox_steps < 1:
            raise ValueError("iterations must be >= 0 and prox_steps >= 1")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.clip_lo > self.clip_hi:
            raise ValueError("clip_lo must not exceed clip_hi")
        if self.project_latent_radius is not None and self.project_latent_radius <= 0:
            raise ValueError("project_latent_radius must be positive")

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class RecoveryResult:
    """Outcome of one recovery call.

    ``x_hat`` is clipped to the solver's box; ``x_raw`` is the unclipped
    estimate ``G(z_hat) + nu_hat``.  ``objective`` is the final objective
    value at ``x_raw`` for the selected restart.
    """

    x_hat: np.ndarray
    z_hat: np.ndarray | None
    nu_hat: np.ndarray | None
    objective_trace: list
    measurement_error: float
    restarts_used: int
    best_restart: int
    x_raw: np.ndarray
    objective: float
    restart_errors: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, include_x: bool = True) -> dict:
        d = {
            "measurement_error": self.measurement_error,
            "objective": self.objective,
            "restarts_used": self.restarts_used,
            "best_restart": self.best_restart,
            "restart_errors": list(map(float, self.restart_errors)),
            "objective_trace": list(map(float, self.objective_trace)),
            "z_hat": None if self.z_hat is None else self.z_hat.tolist(),
            "diagnostics": {k: _jsonable(v) for k, v in self.diagnostics.items()},
        }
        if include_x:
            d["x_hat"] = self.x_hat.tolist()
            d["nu_hat"] = None if self.nu_hat is None else self.nu_hat.tolist()
        return d

    def to_json(self, include_x: bool = True) -> str:
        return json.dumps(self.to_dict(include_x), allow_nan=False)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, float)):
        return float(v)
    return v


def _check_problem(e: SensingEnsemble, y) -> tuple[np.ndarray, np.ndarray]:
    a = e.matrix
    y = as_signal(y, "y")
    if y.ndim != 1 or y.shape[0] != e.m:
        raise ValueError(f"measurement vector length {y.shape} does not match m={e.m}")
    return a, y


def _top_eig_ata(a: np.ndarray, iterations: int) -> float:
    return spectral_norm(a, iterations=iterations, tol=0.0) ** 2


def lasso_objective(a, y, x, mu) -> float:
    r = a @ x - y
    return float(r @ r + mu * np.sum(np.abs(x)))


def lasso(e: SensingEnsemble, y, mu: float, iterations: int = 1000, *, clip_lo: float = 0.0,
          clip_hi: float = 1.0, power_iterations: int = 30, record_trace: bool = True) -> RecoveryResult:
    """FISTA on ``||A x - y||^2 + mu ||x||_1``, started from zero.

    The step is ``1/L`` with ``L = 2 * lambda_max(A^T A)``, the gradient's
    Lipschitz constant, where ``lambda_max`` comes from power iteration and is
    inflated by 5% to cover the power-iteration underestimate.
    """
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    a, y = _check_problem(e, y)
    n = e.n
    lip = 2.0 * _top_eig_ata(a, power_iterations) * 1.05
    x = np.zeros(n)
    if lip == 0.0:
        lip = 1.0
    w = x.copy()
    t = 1.0
    aty = a.T @ y
    trace = []
    for _ in range(iterations):
        grad = 2.0 * (a.T @ (a @ w) - aty)
        x_new = soft_threshold(w - grad / lip, mu / lip)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        w = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        if record_trace:
            trace.append(lasso_objective(a, y, x, mu))
    if not np.all(np.isfinite(x)):
        raise NumericalError("LASSO iterate became non-finite")
    x_hat = clip_to_box(x, clip_lo, clip_hi)
    r = a @ x_hat - y
    return RecoveryResult(
        x_hat=x_hat,
        z_hat=None,
        nu_hat=None,
        objective_trace=trace,
        measurement_error=float(np.linalg.norm(r)),
        restarts_used=1,
        best_restart=0,
        x_raw=x,
        objective=lasso_objective(a, y, x, mu),
        restart_errors=[float(np.linalg.norm(r))],
        diagnostics={"lipschitz": lip, "mu": mu},
    )


def sparse_gen_objective(a, y, g: GeneratorNetwork, z, nu, lam: float, basis: OrthonormalBasis | None = None):
    """``||B nu||_1 + lam ||A (G(z) + nu) - y||^2``; batched over rows of ``z``/``nu``."""
    x = forward(g, z) + nu
    r = x @ a.T - y
    coef = nu if basis is None else basis.forward(nu)
    return np.sum(np.abs(coef), axis=-1) + lam * np.sum(r * r, axis=-1)


def _initial_latents(g: GeneratorNetwork, cfg: SolverConfig) -> np.ndarray:
    return np.stack([make_rng(cfg.seed, "restart", r).normal(size=g.k, scale=cfg.z_init_std)
                     for r in range(cfg.restarts)])


def _project(z: np.ndarray, radius: float | None) -> None:
    if radius is None:
        return
    norms = np.linalg.norm(z, axis=1)
    over = norms > radius
    if np.any(over):
        z[over] *= (radius / norms[over])[:, None]


def _solve(e, y, g, basis, cfg: SolverConfig, *, fix_nu: bool, z_init=None, keep_latents=False) -> RecoveryResult:
    a, y = _check_problem(e, y)
    if g.n != e.n:
        raise ValueError(f"generator output dim {g.n} does not match ensemble n={e.n}")
    if basis is None:
        basis = identity_basis(e.n)
    if basis.n != e.n:
        raise ValueError(f"basis size {basis.n} does not match n={e.n}")
    lam = cfg.lam
    at = np.ascontiguousarray(a.T)
    n_rs = cfg.restarts

    z = _initial_latents(g, cfg) if z_init is None else np.array(z_init, dtype=np.float64)
    nu = np.zeros((n_rs, e.n))
    joint = cfg.mode == "joint-subgradient" and not fix_nu
    prox = cfg.mode == "alternating-prox" and not fix_nu
    eta = 0.0
    if prox:
        eta = 1.0 / (2.0 * lam * _top_eig_ata(a, 30) * 1.05)
    opt = Adam([z.shape, nu.shape] if joint else [z.shape], lr=cfg.step_size,
               beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)

    def l1(v):
        return np.sum(np.abs(basis.forward(v)), axis=1)

    def objective(res, v):
        data = np.sum(res * res, axis=1)
        return data if fix_nu else l1(v) + lam * data

    trace = np.empty((cfg.iterations, n_rs))
    worst_prox_increase = -np.inf
    for it in range(cfg.iterations):
        gz_out, cache = forward_cached(g, z)
        res = (gz_out + nu) @ at - y
        if prox:
            before = objective(res, nu)
            for _ in range(cfg.prox_steps):
                step = nu - eta * (2.0 * lam) * (res @ a)
                nu_new = basis.inverse(soft_threshold(basis.forward(step), eta))
                res = res + (nu_new - nu) @ at
                nu = nu_new
            after = objective(res, nu)
            worst_prox_increase = max(worst_prox_increase, float(np.max(after - before)))
            trace[it] = after
        else:
            trace[it] = objective(res, nu)
        grad_x = (2.0 * lam) * (res @ a)
        gz = backprop(g, cache, grad_x)
        if joint:
            gnu = basis.inverse(np.sign(basis.forward(nu))) + grad_x
            opt.step([z, nu], [gz, gnu])
        else:
            opt.step([z], [gz])
        _project(z, cfg.project_latent_radius)

    x_raw = forward(g, z) + nu
    if not np.all(np.isfinite(x_raw)):
        raise NumericalError("recovery iterate became non-finite")
    res = x_raw @ at - y
    final_obj = objective(res, nu)
    x_clip = clip_to_box(x_raw, cfg.clip_lo, cfg.clip_hi)
    errs = np.linalg.norm(x_clip @ at - y, axis=1)
    best = int(np.argmin(errs))  # lowest index wins ties
    diag = {"mode": "gen" if fix_nu else cfg.mode, "final_objectives": final_obj.tolist()}
    if keep_latents:
        diag["latents"] = z.copy()
    if prox:
        diag["prox_step"] = eta
        diag["max_prox_objective_increase"] = worst_prox_increase if cfg.iterations else None
    return RecoveryResult(
        x_hat=x_clip[best],
        z_hat=z[best].copy(),
        nu_hat=None if fix_nu else nu[best].copy(),
        objective_trace=trace[:, best].tolist(),
        measurement_error=float(errs[best]),
        restarts_used=n_rs,
        best_restart=best,
        x_raw=x_raw[best],
        objective=float(final_obj[best]),
        restart_errors=errs.tolist(),
        diagnostics=diag,
    )


def gen_recover(e: SensingEnsemble, y, g: GeneratorNetwork, cfg: SolverConfig = SolverConfig(), *,
                keep_latents: bool = False) -> RecoveryResult:
    """Minimise ``||A G(z) - y||^2`` over ``z`` with Adam and random restarts.

    Shares its iteration with :func:`sparse_gen` (deviation frozen at zero),
    so the two follow identical latent trajectories under equal settings.
    The reported objective is the unweighted misfit ``||A G(z) - y||^2``.
    ``keep_latents`` stores the final codes of every restart in
    ``diagnostics["latents"]`` (usable as ``sparse_gen(z_init=...)``).
    """
    return _solve(e, y, g, None, cfg, fix_nu=True, keep_latents=keep_latents)


def sparse_gen(e: SensingEnsemble, y, g: GeneratorNetwork, basis: OrthonormalBasis | None = None,
               cfg: SolverConfig = SolverConfig(), *, fix_nu: bool = False, z_init=None) -> RecoveryResult:
    """Minimise ``||B nu||_1 + lam ||A (G(z) + nu) - y||^2`` over ``(z, nu)``.

    ``basis=None`` means the canonical basis.  The deviation starts at zero.
    With ``cfg.warm_start_gen`` every restart first runs generator-only
    recovery and the joint problem continues from those latent codes;
    passing ``z_init`` (one row per restart) skips that stage and starts
    from the given codes instead.  ``fix_nu=True`` freezes ``nu = 0`` and
    reproduces :func:`gen_recover` exactly.
    """
    if z_init is not None:
        z_init = np.atleast_2d(np.asarray(z_init, dtype=np.float64))
        if z_init.shape != (cfg.restarts, g.k):
            raise ValueError(f"z_init must have shape {(cfg.restarts, g.k)}, got {z_init.shape}")
    elif cfg.warm_start_gen and not fix_nu:
        z_init = gen_recover(e, y, g, cfg, keep_latents=True).diagnostics["latents"]
    return _solve(e, y, g, basis, cfg, fix_nu=fix_nu, z_init=z_init)


def latent_grid(g: GeneratorNetwork, points: int = 21, span: float = 3.0) -> np.ndarray:
    """Uniform grid over ``[-span, span]^k``; a single point for constant generators."""
    if g.is_constant:
        return np.zeros((1, g.k))
    if g.k > ORACLE_MAX_K:
        raise ScaleLimitError(f"latent grid needs k <= {ORACLE_MAX_K}, got k={g.k}")
    axis = np.linspace(-span, span, points)
    mesh = np.meshgrid(*([axis] * g.k), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def check_oracle_scale(n: int, l: int, g: GeneratorNetwork) -> None:
    if n > ORACLE_MAX_N:
        raise ScaleLimitError(f"exhaustive decoding needs n <= {ORACLE_MAX_N}, got n={n}")
    if not 0 <= l <= min(ORACLE_MAX_L, n):
        raise ScaleLimitError(f"exhaustive decoding needs 0 <= l <= {ORACLE_MAX_L}, got l={l}")
    if not g.is_constant and g.k > ORACLE_MAX_K:
        raise ScaleLimitError(f"exhaustive decoding needs k <= {ORACLE_MAX_K}, got k={g.k}")


class _TubeL1Program:
    """``min sum_i w_i |u_i|  s.t. ||A u - c||_2 <= eps`` compiled once, re-solved per (z, support)."""

    def __init__(self, a: np.ndarray, eps: float):
        import cvxpy as cp

        m, n = a.shape
        self.u = cp.Variable(n)
        self.c = cp.Parameter(m)
        self.w = cp.Parameter(n, nonneg=True)
        cons = [a @ self.u == self.c] if eps == 0 else [cp.norm(a @ self.u - self.c, 2) <= eps]
        self.problem = cp.Problem(cp.Minimize(self.w @ cp.abs(self.u)), cons)

    def solve(self, c, w):
        import cvxpy as cp

        self.c.value = c
        self.w.value = w
        try:
            self.problem.solve(solver=cp.CLARABEL)
        except cp.error.SolverError:
            return math.inf, None
        if self.problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            return math.inf, None
        return float(self.problem.value), np.asarray(self.u.value, dtype=np.float64)


def oracle_decode(e: SensingEnsemble, y, g: GeneratorNetwork, l: int, eps_max: float, *,
                  grid_points: int = 21, span: float = 3.0, feas_tol: float = 1e-9) -> np.ndarray:
    """Exhaustive minimiser of the sparse-deviation distance over the measurement tube.

    Returns ``argmin_{x : ||A x - y|| <= eps_max} sigma_{l,G}(x)`` where
    ``sigma_{l,G}(x) = min_{z, |S| <= l} ||(x - G(z))_{S^c}||_1`` and ``z``
    ranges over a uniform latent grid.  Zero-distance candidates are found by
    least squares on each support (the best-fitting one is returned); failing
    that, one small convex program per (grid point, support) is solved.

    Only for toy sizes: ``n <= 12``, ``l <= 2`` and ``k <= 2`` unless ``G`` is
    constant.
    """
    a, y = _check_problem(e, y)
    m, n = a.shape
    if g.n != n:
        raise ValueError(f"generator output dim {g.n} does not match n={n}")
    if eps_max < 0:
        raise ValueError("eps_max must be nonnegative")
    check_oracle_scale(n, l, g)
    centers = forward(g, latent_grid(g, grid_points, span))
    supports = list(itertools.combinations(range(n), l))
    tol = feas_tol * (1.0 + np.linalg.norm(y))

    best_res, best_x = math.inf, None
    for gc in centers:
        c = y - a @ gc
        for s in supports:
            if s:
                cols = a[:, s]
                coef, *_ = np.linalg.lstsq(cols, c, rcond=None)
                resid = float(np.linalg.norm(cols @ coef - c))
            else:
                coef, resid = np.zeros(0), float(np.linalg.norm(c))
            if resid <= eps_max + tol and resid < best_res:
                x = gc.copy()
                x[list(s)] += coef
                best_res, best_x = resid, x
    if best_x is not None:
        return best_x

    prog = _TubeL1Program(a, eps_max)
    best_val = math.inf
    for gc in centers:
        c = y - a @ gc
        for s in supports:
            w = np.ones(n)
            w[list(s)] = 0.0
            val, u = prog.solve(c, w)
            if u is not None and val < best_val:
                best_val, best_x = val, gc + u
    if best_x is None:
        raise InfeasibleError("no signal satisfies ||A x - y|| <= eps_max")
    return best_x
