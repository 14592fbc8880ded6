"""Acceptance criteria, each recorded as one pass/fail line in the terminal summary."""

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from sparsegen.basis import identity_basis, make_basis
from sparsegen.core import make_rng
from sparsegen.genmodel import forward, mlp, random_relu_generator, save_weights, vjp, zero_generator
from sparsegen.harness.cli import main as cli_main
from sparsegen.harness.datasets import Dataset, glyph_images, mnist_images, split, write_idx
from sparsegen.harness.experiment import ExperimentGrid, grid_search, run_experiment
from sparsegen.recover import SolverConfig, gen_recover, lasso, lasso_objective, sparse_gen
from sparsegen.sensing import gaussian_ensemble, sense
from sparsegen.vae import TrainConfig, build_vae, elbo, train
from sparsegen.verify import certified_alpha, check_lemma1_bound, check_rec, check_rip


def record(key, ok, detail):
    ACCEPTANCE_LINES[key] = f"{key} {'PASS' if ok else 'FAIL'}: {detail}"
    assert ok, detail


def group_means(rows):
    out = {}
    for r in rows:
        out.setdefault((r.algorithm, r.m), []).append(r.l2_err)
    return {k: float(np.mean(v)) for k, v in out.items()}


# shared MNIST setup: 100 held-out test images, 20 validation images, VAE trained on the rest
@pytest.fixture(scope="module")
def mnist_split():
    rest, test = split(mnist_images(), 100, seed=0)
    train_imgs, val = split(rest, 20, seed=1)
    return train_imgs, val, test


@pytest.fixture(scope="module")
def mnist_decoder(mnist_split):
    model, _ = train(build_vae(seed=0), mnist_split[0], TrainConfig(epochs=60, seed=0))
    return model.decoder


RECOVERY = SolverConfig(iterations=500, restarts=3, warm_start_gen=True)


@pytest.fixture(scope="module")
def tuned(mnist_split, mnist_decoder):
    """lam for Sparse-Gen and mu for LASSO picked on validation images."""
    val = Dataset("mnist-val", mnist_split[1])
    g = ExperimentGrid(val, ("sparse-gen",), (100, 750), trials_per_cell=3, solver=RECOVERY,
                       generator=mnist_decoder)
    recs = grid_search(g, {"lam": [1.0, 3.0, 10.0]})
    lam = min((1.0, 3.0, 10.0), key=lambda v: sum(r["mean_l2"] for r in recs if r["lam"] == v))
    g = ExperimentGrid(val, ("lasso",), (100, 750), trials_per_cell=3)
    recs = grid_search(g, {"lasso_mu": [0.01, 0.1, 1.0]})
    mu = min((0.01, 0.1, 1.0), key=lambda v: sum(r["mean_l2"] for r in recs if r["lasso_mu"] == v))
    return lam, mu


def test_ac1_lasso_equivalence():
    lam = 100.0
    worst = 0.0
    for i in range(20):
        e = gaussian_ensemble(50, 100, 0.0, seed=i)
        r = make_rng(i, "ac1")
        x = np.zeros(100)
        x[r.choice(100, 5, replace=False)] = r.normal(size=5)
        y = sense(e, x)
        # restarts only move z, which the zero generator ignores
        sg = sparse_gen(e, y, zero_generator(20, 100), None,
                        SolverConfig(lam=lam, iterations=5000, restarts=1, seed=i))
        ls = lasso(e, y, 1 / lam, 5000)
        ref = lam * lasso_objective(e.matrix, y, ls.x_raw, 1 / lam)
        worst = max(worst, abs(sg.objective - ref) / ref)
    record("AC1", worst <= 0.01, f"worst relative objective gap {worst:.2e} (tol 1e-2) over 20 instances")


@pytest.mark.slow
def test_ac2_vanishing_error_at_full_measurements():
    g = random_relu_generator([20, 500, 784], seed=1)
    free = dict(clip_lo=-np.inf, clip_hi=np.inf)
    cfg = SolverConfig(lam=100.0, iterations=1000, restarts=3, prox_steps=1, step_size=0.01, **free)
    err_sg, err_gen = [], []
    for i in range(20):
        r = make_rng(i, "ac2")
        x = forward(g, r.normal(size=20))
        x[r.choice(784, 10, replace=False)] += r.normal(size=10)
        e = gaussian_ensemble(784, 784, 0.0, seed=100 + i)
        y = sense(e, x)
        c = cfg.with_(seed=i)
        gen = gen_recover(e, y, g, c, keep_latents=True)
        sg = sparse_gen(e, y, g, None, c, z_init=gen.diagnostics["latents"])
        err_sg.append(np.linalg.norm(sg.x_hat - x) / np.linalg.norm(x))
        err_gen.append(np.linalg.norm(gen.x_hat - x) / np.linalg.norm(x))
    med_sg, med_gen = float(np.median(err_sg)), float(np.median(err_gen))
    record("AC2", med_sg <= 1e-2 and med_gen >= 5 * med_sg,
           f"median relative l2: sparse-gen {med_sg:.2e} (<= 1e-2), gen {med_gen:.2e} (>= 5x)")


@pytest.mark.slow
def test_ac3_low_m_ordering(mnist_split, mnist_decoder, tuned):
    lam, mu = tuned
    test = Dataset("mnist", mnist_split[2])
    g = ExperimentGrid(test, ("lasso", "gen", "sparse-gen"), (100, 750), solver=RECOVERY.with_(lam=lam),
                       lasso_mu=mu, generator=mnist_decoder)
    means = group_means(run_experiment(g))
    ok = (means["sparse-gen", 100] < means["lasso", 100] and means["gen", 100] < means["lasso", 100]
          and means["sparse-gen", 750] < means["gen", 750])
    detail = ", ".join(f"{a}@{m}={means[a, m]:.3f}" for a in ("lasso", "gen", "sparse-gen") for m in (100, 750))
    record("AC3", ok, f"mean l2 over 100 images (lam={lam:g}, mu={mu:g}): {detail}")


@pytest.mark.slow
def test_ac4_transfer_transition(mnist_decoder, tuned):
    lam, _ = tuned
    glyphs = Dataset("glyphs", glyph_images(100, seed=0), "binary")
    g = ExperimentGrid(glyphs, ("gen", "sparse-gen"), (100, 200), solver=RECOVERY.with_(lam=lam),
                       generator=mnist_decoder)
    means = group_means(run_experiment(g))
    ok = means["sparse-gen", 200] < means["gen", 200] and means["sparse-gen", 200] < means["sparse-gen", 100]
    record("AC4", ok, f"mean l2 on 100 glyphs: sparse-gen@100={means['sparse-gen', 100]:.3f}, "
                      f"sparse-gen@200={means['sparse-gen', 200]:.3f}, gen@200={means['gen', 200]:.3f}")


def test_ac5_gradient_oracles():
    h = 1e-6
    worst_vjp = 0.0
    for a in range(10):
        r = make_rng(a, "ac5-arch")
        dims = [int(d) for d in r.integers(2, 8, size=int(r.integers(3, 5)))]
        g = mlp(dims, seed=a, hidden=("relu", "sigmoid")[a % 2], output=("identity", "sigmoid")[a % 2],
                bias_std=0.1)
        z, u = r.normal(size=dims[0]), r.normal(size=dims[-1])
        fd = np.array([(u @ forward(g, z + h * ei) - u @ forward(g, z - h * ei)) / (2 * h)
                       for ei in np.eye(dims[0])])
        worst_vjp = max(worst_vjp, np.linalg.norm(vjp(g, z, u) - fd) / max(np.linalg.norm(fd), 1e-12))
    worst_elbo = 0.0
    for a in range(10):
        r = make_rng(a, "ac5-vae")
        n, k = int(r.integers(3, 7)), int(r.integers(1, 4))
        hidden = tuple(int(d) for d in r.integers(3, 8, size=int(r.integers(1, 3))))
        model = build_vae(n, hidden, k, seed=a)
        model = model.with_params([p if p.ndim == 2 else r.normal(size=p.shape, scale=0.1)
                                   for p in model.params()])
        batch, eta = r.uniform(size=(3, n)), r.normal(size=(3, k))
        params = [p.copy() for p in model.params()]
        grads = elbo(model, batch, eta=eta).grads
        for p, got in zip(params, grads):
            fd = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                orig = p[idx]
                p[idx] = orig + h
                up = elbo(model.with_params(params), batch, eta=eta).loss
                p[idx] = orig - h
                down = elbo(model.with_params(params), batch, eta=eta).loss
                p[idx] = orig
                fd[idx] = (up - down) / (2 * h)
            worst_elbo = max(worst_elbo, np.linalg.norm(got - fd) / max(np.linalg.norm(fd), 1e-12))
    record("AC5", worst_vjp <= 1e-5 and worst_elbo <= 1e-4,
           f"worst relative error vjp {worst_vjp:.1e} (tol 1e-5), elbo {worst_elbo:.1e} (tol 1e-4)")


def test_ac6_rip_statistics():
    hi = check_rip(gaussian_ensemble(160, 256, seed=0), 5, 0.5, trials=1000, seed=0).satisfied_fraction
    lo = check_rip(gaussian_ensemble(20, 256, seed=0), 5, 0.5, trials=1000, seed=0).satisfied_fraction
    record("AC6", hi >= 0.99 and lo <= 0.5,
           f"satisfied fraction m=160 {hi:.3f} (>= 0.99), m=20 {lo:.3f} (<= 0.50)")


def test_ac7_decoder_bound_toy_scale():
    e = gaussian_ensemble(8, 10, seed=0)
    g = zero_generator(1, 10)
    alpha = certified_alpha(e, 1)
    # the certificate is itself checked by enumeration
    certified = (alpha < 1 and check_rip(e, 2, alpha + 1e-12, exhaustive=True).passed
                 and check_rec(e, 3, 1 - alpha - 1e-12, exhaustive=True).passed)
    counts = {eps: check_lemma1_bound(e, g, 1, alpha, trials=100, seed=0, eps_max=eps).violations
              for eps in (0.0, 0.05)}
    record("AC7", certified and not any(counts.values()),
           f"certified alpha {alpha:.3f}; violations eps=0: {counts[0.0]}, eps=0.05: {counts[0.05]} (100 trials)")


def test_ac8_vae_training_sanity(mnist_split):
    _, trace = train(build_vae(seed=0), mnist_split[0][:1000],
                     TrainConfig(epochs=5, learning_rate=1e-3, batch_size=100, seed=0))
    loss = [r["mean_neg_elbo"] for r in trace]
    bce = [r["mean_bce"] for r in trace]
    ok = all(b < a for a, b in zip(loss, loss[1:])) and bce[-1] <= 0.7 * bce[0]
    record("AC8", ok, f"-elbo per epoch {[round(v, 1) for v in loss]}; final bce {bce[-1] / bce[0]:.2f}x epoch 1")


def test_ac9_basis_integrity():
    worst = 0.0
    for kind in ("dct", "haar"):
        for n in (2, 4, 8, 64, 256):
            b = make_basis(kind, n).matrix
            worst = max(worst, np.abs(b.T @ b - np.eye(n)).max())
    g = random_relu_generator([4, 16, 40], seed=0)
    e = gaussian_ensemble(20, 40, 0.1, seed=0)
    y = sense(e, forward(g, np.ones(4)), noise_seed=0)
    cfg = SolverConfig(iterations=100, restarts=3, seed=5)
    plain = sparse_gen(e, y, g, None, cfg)
    eye = sparse_gen(e, y, g, identity_basis(40), cfg)
    same = plain.x_hat.tobytes() == eye.x_hat.tobytes() and plain.objective_trace == eye.objective_trace
    record("AC9", worst <= 1e-10 and same,
           f"max |B^T B - I| {worst:.1e} (tol 1e-10); identity-basis recovery bit-identical: {same}")


def test_ac10_cli_determinism(tmp_path):
    write_idx(tmp_path / "imgs.idx", glyph_images(3, seed=0))
    save_weights(mlp([5, 30, 784], seed=0, output="sigmoid"), tmp_path / "g.mlpw")
    argv = ["experiment", "--data", str(tmp_path / "imgs.idx"), "--weights", str(tmp_path / "g.mlpw"),
            "--m", "50,100", "--iterations", "50", "--restarts", "2", "--base-seed", "7"]
    codes = [cli_main([*argv, "--out", str(tmp_path / f"{t}.csv")]) for t in "ab"]
    a, b = (tmp_path / "a.csv").read_bytes(), (tmp_path / "b.csv").read_bytes()
    record("AC10", codes == [0, 0] and a == b and a.count(b"\n") == 1 + 3 * 2 * 3,
           f"exit codes {codes}; csv byte-identical: {a == b} ({len(a)} bytes)")
