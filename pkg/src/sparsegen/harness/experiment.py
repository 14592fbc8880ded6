"""Error-versus-measurements experiments over a dataset slice.

Every (image, m) cell gets its own Gaussian ensemble and noise draw, seeded
from ``derive_seed(base_seed, m, image_index)``, and all algorithms in a cell
see the same measurements.  Rows are written sorted by
``(dataset, algorithm, m, image_index)`` so output is independent of
evaluation order.
"""

from __future__ import annotations

import csv
import itertools
import logging
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from ..basis import make_basis
from ..core import derive_seed
from ..errors import NumericalError
from ..genmodel import GeneratorNetwork, load_weights
from ..recover import SolverConfig, gen_recover, lasso, sparse_gen
from ..sensing import gaussian_ensemble, sense
from .datasets import Dataset

__all__ = [
    "ALGORITHMS",
    "CSV_COLUMNS",
    "ExperimentGrid",
    "ResultRow",
    "run_experiment",
    "run_transfer",
    "grid_search",
    "write_results_csv",
    "read_results_csv",
    "load_blobs",
    "cell_seed",
]

log = logging.getLogger(__name__)

ALGORITHMS = ("lasso", "gen", "sparse-gen")
CSV_COLUMNS = ("dataset", "algorithm", "m", "image_index", "seed", "l1_err", "l2_err", "linf_err",
               "measurement_err", "wall_ms")


@dataclass(frozen=True)
class ExperimentGrid:
    """One experiment: dataset slice x algorithms x measurement counts.

    ``trials_per_cell`` images are taken from ``image_indices`` (default: the
    first images of the dataset); each image is one trial of every
    ``(algorithm, m)`` cell.  ``solver`` configures Gen and Sparse-Gen
    (``solver_overrides`` may replace it per algorithm), ``lasso_mu`` is the
    LASSO penalty.  With ``shared_matrix`` every image at a given ``m`` uses
    the same ensemble.  Wall times are recorded only when
    ``record_wall_time`` is set, so default output is byte-reproducible.
    """

    dataset: Dataset
    algorithms: tuple
    m_values: tuple
    trials_per_cell: int | None = None
    base_seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    solver_overrides: dict = field(default_factory=dict)
    lasso_mu: float = 0.1
    lasso_iterations: int = 1000
    noise_std: float = 0.1
    entry_scale: str = "variance"
    basis: str = "identity"
    generator: GeneratorNetwork | None = None
    image_indices: tuple | None = None
    shared_matrix: bool = False
    record_wall_time: bool = False

    def __post_init__(self):
        algs = tuple(self.algorithms)
        if not algs:
            raise ValueError("at least one algorithm is required")
        unknown = [a for a in algs if a not in ALGORITHMS]
        if unknown:
            raise ValueError(f"unknown algorithm(s) {unknown}; expected from {ALGORITHMS}")
        if len(set(algs)) != len(algs):
            raise ValueError("duplicate algorithm names")
        ms = tuple(int(m) for m in self.m_values)
        if not ms:
            raise ValueError("m_values must not be empty")
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError("m_values must be strictly ascending")
        if ms[0] < 1:
            raise ValueError("measurement counts must be positive")
        idx = tuple(range(len(self.dataset))) if self.image_indices is None else tuple(self.image_indices)
        if self.trials_per_cell is not None:
            if not 1 <= self.trials_per_cell <= len(idx):
                raise ValueError(f"trials_per_cell must lie in [1, {len(idx)}]")
            idx = idx[: self.trials_per_cell]
        if not idx or min(idx) < 0 or max(idx) >= len(self.dataset):
            raise ValueError("image indices out of range")
        if self.noise_std < 0 or self.lasso_mu <= 0:
            raise ValueError("noise_std must be >= 0 and lasso_mu > 0")
        if self.generator is not None and self.generator.n != self.dataset.n:
            raise ValueError(f"generator output dim {self.generator.n} does not match images of length "
                             f"{self.dataset.n}")
        if self.generator is None and any(a != "lasso" for a in algs):
            raise ValueError("generator weights are required for gen and sparse-gen")
        object.__setattr__(self, "algorithms", algs)
        object.__setattr__(self, "m_values", ms)
        object.__setattr__(self, "image_indices", idx)

    def config_for(self, algorithm: str) -> SolverConfig:
        return self.solver_overrides.get(algorithm, self.solver)


@dataclass(frozen=True)
class ResultRow:
    dataset: str
    algorithm: str
    m: int
    image_index: int
    seed: int
    l1_err: float
    l2_err: float
    linf_err: float
    measurement_err: float
    wall_ms: float = 0.0

    def __post_init__(self):
        for name in ("l1_err", "l2_err", "linf_err", "measurement_err"):
            if not getattr(self, name) >= 0:
                raise NumericalError(f"{name} is {getattr(self, name)} for {self.algorithm} m={self.m}")

    @property
    def key(self):
        return (self.dataset, self.algorithm, self.m, self.image_index)

    def csv_fields(self) -> list[str]:
        wall = "0" if self.wall_ms == 0 else f"{self.wall_ms:.3f}"
        return [self.dataset, self.algorithm, str(self.m), str(self.image_index), str(self.seed),
                repr(self.l1_err), repr(self.l2_err), repr(self.linf_err), repr(self.measurement_err), wall]


def cell_seed(base_seed: int, m: int, image_index: int | None) -> int:
    """Ensemble seed of one cell; ``image_index=None`` gives the seed shared by every image at ``m``."""
    if image_index is None:
        return derive_seed("cell-shared", base_seed, m)
    return derive_seed("cell", base_seed, m, image_index)


def _errors(x_hat, x, a, y):
    d = x_hat - x
    return (float(np.sum(np.abs(d))), float(np.linalg.norm(d)), float(np.max(np.abs(d))),
            float(np.linalg.norm(a @ x_hat - y)))


def _run_cell(grid: ExperimentGrid, basis, m: int, idx: int):
    x = grid.dataset.images[idx]
    seed = cell_seed(grid.base_seed, m, None if grid.shared_matrix else idx)
    e = gaussian_ensemble(m, grid.dataset.n, grid.noise_std, seed=seed, entry_scale=grid.entry_scale)
    y = sense(e, x, noise_seed=derive_seed("noise", grid.base_seed, m, idx))
    out = []
    gen_latents = None
    # gen first so a warm-started sparse-gen can reuse its restarts
    for alg in sorted(grid.algorithms, key=lambda a: a != "gen"):
        cfg = grid.config_for(alg).with_(seed=seed)
        t0 = time.perf_counter()
        if alg == "lasso":
            res = lasso(e, y, grid.lasso_mu, grid.lasso_iterations, clip_lo=cfg.clip_lo, clip_hi=cfg.clip_hi,
                        record_trace=False)
        elif alg == "gen":
            res = gen_recover(e, y, grid.generator, cfg, keep_latents=True)
            gen_latents = (cfg, res.diagnostics.pop("latents"))
        else:
            z0 = None
            if cfg.warm_start_gen and gen_latents is not None and gen_latents[0] == cfg:
                z0 = gen_latents[1]
            res = sparse_gen(e, y, grid.generator, basis, cfg, z_init=z0)
        wall = (time.perf_counter() - t0) * 1e3 if grid.record_wall_time else 0.0
        if not np.all(np.isfinite(res.x_hat)):
            raise NumericalError(f"non-finite estimate from {alg} at m={m}, image {idx}")
        l1, l2, linf, merr = _errors(res.x_hat, x, e.matrix, y)
        out.append((ResultRow(grid.dataset.name, alg, m, idx, seed, l1, l2, linf, merr, wall), res.x_hat))
    return out


def run_experiment(grid: ExperimentGrid, out_path=None, *, blob_path=None, progress=None) -> list[ResultRow]:
    """Run every cell, optionally writing the CSV and an ``.npz`` of estimates.

    Blob keys are ``"<algorithm>/<m>/<image_index>"``.  ``progress`` is called
    with each finished row.
    """
    basis = None
    if "sparse-gen" in grid.algorithms and grid.basis != "identity":
        basis = make_basis(grid.basis, grid.dataset.n)
    rows, blobs = [], {}
    for m, idx in itertools.product(grid.m_values, grid.image_indices):
        for row, x_hat in _run_cell(grid, basis, m, idx):
            rows.append(row)
            blobs[f"{row.algorithm}/{m}/{idx}"] = x_hat
            log.debug("%s m=%d image=%d l2=%.4g", row.algorithm, m, idx, row.l2_err)
            if progress is not None:
                progress(row)
    rows.sort(key=lambda r: r.key)
    if out_path is not None:
        write_results_csv(rows, out_path)
    if blob_path is not None:
        np.savez(blob_path, **blobs)
    return rows


def run_transfer(source_weights, target_dataset: Dataset, grid: ExperimentGrid, out_path=None, **kw):
    """Run ``grid`` on ``target_dataset`` with a generator trained elsewhere.

    ``source_weights`` is a weight-file path or a network.  Image indices are
    reset to the first ``trials_per_cell`` target images.
    """
    g = source_weights
    if not isinstance(g, GeneratorNetwork):
        g = load_weights(source_weights)
    return run_experiment(replace(grid, dataset=target_dataset, generator=g, image_indices=None), out_path, **kw)


def write_results_csv(rows, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow(r.csv_fields())


def read_results_csv(path) -> list[dict]:
    """Rows as dicts with numeric fields converted; raises ``ValueError`` on missing columns."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        cols = reader.fieldnames or []
        missing = [c for c in CSV_COLUMNS if c not in cols]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        out = []
        for rec in reader:
            row = dict(rec)
            for c in ("m", "image_index", "seed"):
                row[c] = int(row[c])
            for c in ("l1_err", "l2_err", "linf_err", "measurement_err", "wall_ms"):
                row[c] = float(row[c])
            out.append(row)
    return out


def load_blobs(path) -> dict:
    with np.load(path) as z:
        return {k: z[k] for k in z.files}


def grid_search(grid: ExperimentGrid, params: dict, out_path=None) -> list[dict]:
    """Evaluate every combination of ``params`` on ``grid`` (a validation slice).

    Keys are :class:`SolverConfig` field names (applied to every algorithm's
    config) or ``lasso_mu``.  Returns one record per (combination, algorithm,
    m) with the mean l2 error, sorted by that error.
    """
    solver_fields = {f.name for f in fields(SolverConfig)}
    bad = [k for k in params if k not in solver_fields and k != "lasso_mu"]
    if bad:
        raise ValueError(f"unknown grid-search parameter(s): {bad}")
    names = sorted(params)
    records = []
    for combo in itertools.product(*(params[k] for k in names)):
        setting = dict(zip(names, combo))
        solver_kw = {k: v for k, v in setting.items() if k != "lasso_mu"}
        g = replace(
            grid,
            solver=grid.solver.with_(**solver_kw),
            solver_overrides={a: c.with_(**solver_kw) for a, c in grid.solver_overrides.items()},
            lasso_mu=setting.get("lasso_mu", grid.lasso_mu),
        )
        rows = run_experiment(g)
        for (alg, m), group in itertools.groupby(rows, key=lambda r: (r.algorithm, r.m)):
            errs = [r.l2_err for r in group]
            records.append({**setting, "algorithm": alg, "m": m, "mean_l2": float(np.mean(errs))})
    records.sort(key=lambda r: (r["algorithm"], r["m"], r["mean_l2"]))
    if out_path is not None:
        with open(out_path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=[*names, "algorithm", "m", "mean_l2"], lineterminator="\n")
            w.writeheader()
            w.writerows(records)
    return records

