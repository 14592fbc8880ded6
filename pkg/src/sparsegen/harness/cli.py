"""Command-line entry point: ``sparsegen <command> [options]``.

Options may also come from a flat JSON object given with ``--config``; keys
use the option names with dashes replaced by underscores (which match the
solver and training config field names).  Explicit flags win over the file.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..basis import BASIS_KINDS, make_basis
from ..errors import FormatError, NumericalError, ScaleLimitError
from ..genmodel import load_weights, random_relu_generator, save_weights, zero_generator
from ..recover import MODES, SolverConfig, gen_recover, lasso, sparse_gen
from ..sensing import gaussian_ensemble, load_ensemble, save_ensemble, sense
from ..vae import TrainConfig, build_vae, train, write_trace_csv
from ..verify import (bound_constants, certified_alpha, check_lemma1_bound, check_rec, check_rip,
                      check_srec)
from .datasets import Dataset, glyph_images, load_idx, mnist_images, split, write_idx
from .experiment import ALGORITHMS, ExperimentGrid, grid_search, run_experiment, run_transfer
from .plot import METRICS, plot

log = logging.getLogger("sparsegen")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def int_list(text: str) -> list[int]:
    """``"50,100,200"`` or an inclusive range ``"50:750:100"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            bits = [int(b) for b in part.split(":")]
            if len(bits) != 3 or bits[2] <= 0:
                raise argparse.ArgumentTypeError(f"range {part!r} must be start:stop:step with step > 0")
            out.extend(range(bits[0], bits[1] + 1, bits[2]))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def float_list(text: str) -> list[float]:
    vals = [float(p) for p in text.split(",") if p.strip()]
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


# Solver flags shared by recover / experiment / transfer / grid-search.  Defaults
# live in SolverConfig so that a config file can fill any flag left unset.
_SOLVER_FLAGS = {
    "lam": float,
    "step_size": float,
    "iterations": int,
    "restarts": int,
    "prox_steps": int,
    "clip_lo": float,
    "clip_hi": float,
    "project_latent_radius": float,
}


def _add_solver_flags(p):
    g = p.add_argument_group("solver")
    for name, typ in _SOLVER_FLAGS.items():
        g.add_argument("--" + name.replace("_", "-"), type=typ, default=None)
    g.add_argument("--mode", choices=MODES, default=None)
    g.add_argument("--warm-start-gen", action="store_true", default=None,
                   help="start Sparse-Gen from the generator-only solution")
    g.add_argument("--mu", type=float, default=None, help="LASSO penalty (default 0.1)")
    g.add_argument("--lasso-iterations", type=int, default=None)
    g.add_argument("--basis", choices=BASIS_KINDS, default=None)


def _add_common(p):
    p.add_argument("--config", type=Path, help="JSON file with option values (flags win)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_data_flags(p, *, flag="--data", required=True):
    p.add_argument(flag, type=Path, required=required, help="IDX image file")
    p.add_argument("--binarize", action="store_true", default=None, help="threshold pixels at 0.5")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsegen", description="Compressed sensing with generative priors and sparse deviations.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("make-data", help="write IDX image files (MNIST sample or procedural glyphs)")
    p.add_argument("source", choices=("mnist", "glyphs"))
    p.add_argument("--out", type=Path, required=True, help="output IDX (training split for mnist)")
    p.add_argument("--test-out", type=Path, help="held-out split (mnist only)")
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--count", type=int, default=200, help="number of glyphs")
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)

    p = sub.add_parser("vae-train", help="train the VAE and write decoder weights")
    _add_data_flags(p)
    p.add_argument("--out-weights", type=Path, required=True)
    p.add_argument("--trace", type=Path, help="per-epoch loss CSV")
    p.add_argument("--encoder-weights", type=Path)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--latent-dim", type=int, default=None)
    p.add_argument("--limit", type=int, default=None, help="use only the first N images")
    p.add_argument("--seed", type=int, default=None)
    _add_common(p)

    p = sub.add_parser("sense", help="draw a measurement ensemble (and optionally measure an image)")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, default=784)
    p.add_argument("--noise-std", type=float, default=0.1)
    p.add_argument("--entry-scale", choices=("variance", "std"), default="variance")
    p.add_argument("--kind", choices=("gaussian", "bernoulli"), default="gaussian")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="ensemble file")
    _add_data_flags(p, required=False)
    p.add_argument("--image-index", type=int, default=0)
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--y-out", type=Path, help="write measurements as JSON")
    _add_common(p)

    p = sub.add_parser("recover", help="recover one image and write a RecoveryResult JSON")
    p.add_argument("--alg", choices=ALGORITHMS, required=True)
    p.add_argument("--weights", type=Path)
    _add_data_flags(p)
    p.add_argument("--image-index", type=int, default=0)
    p.add_argument("--m", type=int)
    p.add_argument("--ensemble", type=Path, help="use a saved ensemble instead of drawing one")
    p.add_argument("--noise-std", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="JSON output (default stdout)")
    p.add_argument("--x-blob", type=Path, help="write x_hat as raw little-endian f64 and omit it from JSON")
    _add_solver_flags(p)
    _add_common(p)

    for name, helptext in (("experiment", "error-vs-m grid, one CSV row per (image, algorithm, m)"),
                           ("transfer", "experiment with a generator trained on another dataset"),
                           ("grid-search", "validation grid over lam / step size / LASSO mu")):
        p = sub.add_parser(name, help=helptext)
        if name == "transfer":
            p.add_argument("--source-weights", type=Path, required=True)
            _add_data_flags(p, flag="--target-data")
        else:
            p.add_argument("--weights", type=Path)
            _add_data_flags(p)
        p.add_argument("--algs", type=lambda s: [a.strip() for a in s.split(",") if a.strip()],
                       default=None, help=f"comma list from {','.join(ALGORITHMS)}")
        p.add_argument("--m", type=int_list, required=True, help="e.g. 50,100,200 or 50:750:100")
        p.add_argument("--images", type=int, default=None, help="images per cell (default all)")
        p.add_argument("--base-seed", type=int, default=None)
        p.add_argument("--noise-std", type=float, default=None)
        p.add_argument("--entry-scale", choices=("variance", "std"), default=None)
        p.add_argument("--shared-matrix", action="store_true", default=None)
        p.add_argument("--timing", action="store_true", default=None, help="record wall_ms (breaks byte-reproducibility)")
        p.add_argument("--out", type=Path, required=True)
        if name != "grid-search":
            p.add_argument("--blobs", type=Path, help=".npz of recovered images")
        else:
            p.add_argument("--lams", type=float_list)
            p.add_argument("--step-sizes", type=float_list)
            p.add_argument("--mus", type=float_list)
        _add_solver_flags(p)
        _add_common(p)

    p = sub.add_parser("verify", help="empirical RIP / REC / S-REC / decoder-bound checks (JSON report)")
    p.add_argument("--property", choices=("rip", "rec", "srec", "lemma1"), required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--eps-max", type=float, default=0.0)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--weights", type=Path, help="generator for srec/lemma1 (default: zero generator)")
    p.add_argument("--relu-dims", type=int_list, help="use a random ReLU generator with these dims for srec")
    p.add_argument("--out", type=Path)
    _add_common(p)

    p = sub.add_parser("plot", help="SVG of mean error vs m from an experiment CSV")
    p.add_argument("--csv", type=Path, required=True)
    p.add_argument("--metric", choices=sorted(METRICS), default="l2")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--title")
    _add_common(p)
    return parser


def _merge_config(args, parser) -> argparse.Namespace:
    """Fill options left unset on the command line from ``--config``."""
    if getattr(args, "config", None) is None:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"config {args.config} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise FormatError("config file must hold a flat JSON object")
    known = vars(args)
    unknown = [k for k in cfg if k.replace("-", "_") not in known]
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    for key, value in cfg.items():
        key = key.replace("-", "_")
        if known[key] is None:
            setattr(args, key, value)
    return args


def _solver_config(args) -> SolverConfig:
    kw = {k: getattr(args, k) for k in (*_SOLVER_FLAGS, "mode", "warm_start_gen") if getattr(args, k, None) is not None}
    return SolverConfig(**kw)


def _dataset(path, binarize) -> Dataset:
    return load_idx(path, binarize_pixels=bool(binarize))


def _generator(args, needed: bool):
    if args.weights is None:
        if needed:
            raise UsageError("--weights is required for gen and sparse-gen")
        return None
    return load_weights(args.weights)


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, allow_nan=False)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text + "\n")


def cmd_make_data(args):
    if args.source == "mnist":
        train_imgs, test_imgs = split(mnist_images(), args.n_test, args.seed)
        write_idx(args.out, train_imgs)
        if args.test_out is not None:
            write_idx(args.test_out, test_imgs)
        log.info("wrote %d training and %d test images", len(train_imgs), len(test_imgs))
    else:
        write_idx(args.out, glyph_images(args.count, args.seed))


def cmd_vae_train(args):
    ds = _dataset(args.data, args.binarize)
    data = ds.images if args.limit is None else ds.images[: args.limit]
    cfg_kw = {k: getattr(args, k) for k in ("learning_rate", "epochs", "batch_size", "seed")
              if getattr(args, k) is not None}
    cfg = TrainConfig(**cfg_kw)
    model = build_vae(ds.n, latent_dim=args.latent_dim or 20, seed=cfg.seed)
    model, trace = train(model, data, cfg)
    save_weights(model.decoder, args.out_weights)
    if args.encoder_weights is not None:
        save_weights(model.encoder, args.encoder_weights)
    if args.trace is not None:
        write_trace_csv(trace, args.trace)


def cmd_sense(args):
    e = gaussian_ensemble(args.m, args.n, args.noise_std, seed=args.seed, kind=args.kind,
                          entry_scale=args.entry_scale)
    save_ensemble(e, args.out)
    if args.data is not None:
        ds = _dataset(args.data, args.binarize)
        if ds.n != args.n:
            raise UsageError(f"--n {args.n} does not match image length {ds.n}")
        y = sense(e, ds.images[args.image_index], noise_seed=args.noise_seed)
        _write_json({"y": y.tolist(), "noise_seed": args.noise_seed}, args.y_out)


def cmd_recover(args):
    ds = _dataset(args.data, args.binarize)
    if not 0 <= args.image_index < len(ds):
        raise UsageError(f"--image-index must lie in [0, {len(ds)})")
    x = ds.images[args.image_index]
    if args.ensemble is not None:
        e = load_ensemble(args.ensemble)
    elif args.m is not None:
        e = gaussian_ensemble(args.m, ds.n, args.noise_std, seed=args.seed)
    else:
        raise UsageError("give --m or --ensemble")
    if e.n != ds.n:
        raise UsageError(f"ensemble has n={e.n}, images have length {ds.n}")
    y = sense(e, x, noise_seed=args.seed)
    cfg = _solver_config(args).with_(seed=args.seed)
    g = _generator(args, args.alg != "lasso")
    if args.alg == "lasso":
        res = lasso(e, y, args.mu or 0.1, args.lasso_iterations or 1000, clip_lo=cfg.clip_lo, clip_hi=cfg.clip_hi)
    elif args.alg == "gen":
        res = gen_recover(e, y, g, cfg)
    else:
        basis = make_basis(args.basis, ds.n) if args.basis not in (None, "identity") else None
        res = sparse_gen(e, y, g, basis, cfg)
    out = res.to_dict(include_x=args.x_blob is None)
    out.update({"algorithm": args.alg, "m": e.m, "image_index": args.image_index,
                "l2_err": float(np.linalg.norm(res.x_hat - x))})
    if args.x_blob is not None:
        Path(args.x_blob).write_bytes(res.x_hat.astype("<f8").tobytes())
        out["x_blob"] = str(args.x_blob)
    _write_json(out, args.out)


def _grid(args, ds, g) -> ExperimentGrid:
    cfg = _solver_config(args)
    algs = args.algs or (["lasso"] if g is None else list(ALGORITHMS))
    kw = {"base_seed": args.base_seed, "noise_std": args.noise_std, "entry_scale": args.entry_scale,
          "lasso_mu": args.mu, "lasso_iterations": args.lasso_iterations, "basis": args.basis,
          "shared_matrix": args.shared_matrix, "record_wall_time": args.timing}
    kw = {k: v for k, v in kw.items() if v is not None}
    return ExperimentGrid(ds, tuple(algs), tuple(sorted(set(args.m))), trials_per_cell=args.images,
                          solver=cfg, generator=g, **kw)


def cmd_experiment(args):
    ds = _dataset(args.data, args.binarize)
    algs = args.algs or []
    g = _generator(args, any(a != "lasso" for a in algs))
    run_experiment(_grid(args, ds, g), args.out, blob_path=args.blobs)


def cmd_transfer(args):
    target = _dataset(args.target_data, args.binarize)
    g = load_weights(args.source_weights)
    run_transfer(g, target, _grid(args, target, g), args.out, blob_path=args.blobs)


def cmd_grid_search(args):
    ds = _dataset(args.data, args.binarize)
    algs = args.algs or []
    g = _generator(args, any(a != "lasso" for a in algs))
    params = {}
    if args.lams:
        params["lam"] = args.lams
    if args.step_sizes:
        params["step_size"] = args.step_sizes
    if args.mus:
        params["lasso_mu"] = args.mus
    if not params:
        raise UsageError("give at least one of --lams, --step-sizes, --mus")
    records = grid_search(_grid(args, ds, g), params, args.out)
    for alg in sorted({r["algorithm"] for r in records}):
        best = min((r for r in records if r["algorithm"] == alg), key=lambda r: r["mean_l2"])
        log.info("best for %s: %s", alg, best)


def cmd_verify(args):
    e = gaussian_ensemble(args.m, args.n, 0.0, seed=args.seed)
    if args.property == "rip":
        report = check_rip(e, args.l, args.alpha, args.trials, args.seed, exhaustive=args.exhaustive).to_dict()
    elif args.property == "rec":
        report = check_rec(e, args.l, args.gamma, args.trials, args.seed, exhaustive=args.exhaustive).to_dict()
    else:
        if args.weights is not None:
            g = load_weights(args.weights)
        elif args.relu_dims:
            g = random_relu_generator(args.relu_dims, seed=args.seed)
        else:
            g = zero_generator(1, args.n)
        if g.n != args.n:
            raise UsageError(f"generator output dim {g.n} does not match --n {args.n}")
        if args.property == "srec":
            report = check_srec(e, g, args.l, args.gamma, args.delta, args.trials, args.seed).to_dict()
        else:
            alpha = certified_alpha(e, args.l) if args.exhaustive else args.alpha
            if not 0 < alpha < 1:
                raise UsageError(f"matrix admits no certified alpha in (0, 1) (got {alpha:.4g})")
            bound_constants(alpha, args.delta)
            report = check_lemma1_bound(e, g, args.l, alpha, args.delta, args.trials, args.seed,
                                        args.eps_max).to_dict()
    report["m"], report["n"], report["seed"] = args.m, args.n, args.seed
    _write_json(report, args.out)


def cmd_plot(args):
    plot(args.csv, args.metric, args.out, args.title)


COMMANDS = {
    "make-data": cmd_make_data,
    "vae-train": cmd_vae_train,
    "sense": cmd_sense,
    "recover": cmd_recover,
    "experiment": cmd_experiment,
    "transfer": cmd_transfer,
    "grid-search": cmd_grid_search,
    "verify": cmd_verify,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        args = _merge_config(args, parser)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"sparsegen {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"sparsegen {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"sparsegen {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, ScaleLimitError, TypeError) as exc:
        print(f"sparsegen {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
