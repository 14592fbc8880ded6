import numpy as np
import pytest

from sparsegen.core import make_rng
from sparsegen.genmodel import forward, load_weights, save_weights
from sparsegen.vae import TrainConfig, VaeModel, build_vae, decoder_of, elbo, train, write_trace_csv

TINY = [(4, (8,), 1), (5, (6,), 2), (3, (4, 4), 1), (6, (5,), 3), (4, (7, 3), 2)]


def finite_difference_grads(model, batch, eta, h=1e-6):
    params = [p.copy() for p in model.params()]
    out = []
    for i, p in enumerate(params):
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = elbo(model.with_params(params), batch, eta=eta).loss
            p[idx] = orig - h
            down = elbo(model.with_params(params), batch, eta=eta).loss
            p[idx] = orig
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


def tiny_case(seed, dims):
    n, hidden, k = dims
    model = build_vae(n, hidden, k, seed=seed)
    # nonzero biases so no unit sits exactly at a ReLU kink
    r = make_rng(seed, "bias")
    model = model.with_params([p if p.ndim == 2 else r.normal(size=p.shape, scale=0.1) for p in model.params()])
    batch = r.uniform(size=(3, n))
    eta = r.normal(size=(3, k))
    return model, batch, eta


class TestElbo:
    @pytest.mark.parametrize("seed", range(2))
    @pytest.mark.parametrize("dims", TINY)
    def test_gradients_match_finite_differences(self, dims, seed):
        model, batch, eta = tiny_case(seed, dims)
        res = elbo(model, batch, eta=eta)
        for got, fd in zip(res.grads, finite_difference_grads(model, batch, eta)):
            assert np.linalg.norm(got - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-6)

    def test_kl_zero_at_prior(self):
        model = build_vae(4, (8,), 1, seed=0)
        enc = model.encoder.with_params([np.zeros_like(w) for w in model.encoder.weights],
                                        [np.zeros_like(b) for b in model.encoder.biases])
        res = elbo(VaeModel(enc, model.decoder), np.full((2, 4), 0.5), eta=np.zeros((2, 1)))
        assert res.kl == 0.0

    def test_bce_vanishes_for_confident_reconstruction(self):
        model = build_vae(4, (8,), 1, seed=0)
        dec = model.decoder
        ws = [np.zeros_like(w) for w in dec.weights]
        bs = [np.zeros_like(b) for b in dec.biases]
        bs[-1] = np.full_like(bs[-1], 40.0)
        res = elbo(VaeModel(model.encoder, dec.with_params(ws, bs)), np.ones((2, 4)))
        assert 0.0 <= res.bce < 1e-15

    def test_terms_nonnegative(self):
        model = build_vae(6, (5,), 2, seed=3)
        r = make_rng(0, "x")
        for i in range(5):
            res = elbo(model, r.uniform(size=(4, 6)), rng=make_rng(i, "eta"))
            assert res.kl >= 0 and res.bce >= 0

    def test_rejects_out_of_range_pixels(self):
        model = build_vae(4, (8,), 1, seed=0)
        with pytest.raises(ValueError):
            elbo(model, np.array([[0.0, 1.2, 0.5, 0.5]]))
        with pytest.raises(ValueError):
            elbo(model, np.array([[0.0, -0.1, 0.5, 0.5]]))

    def test_unpacks_as_loss_and_grads(self):
        model = build_vae(4, (8,), 1, seed=0)
        loss, grads = elbo(model, np.full((1, 4), 0.5))
        assert np.isfinite(loss) and len(grads) == len(model.params())


class TestTrain:
    def test_deterministic(self):
        data = make_rng(0, "data").uniform(size=(50, 6))
        cfg = TrainConfig(epochs=3, batch_size=10, seed=4)
        a, ta = train(build_vae(6, (5,), 2, seed=1), data, cfg)
        b, tb = train(build_vae(6, (5,), 2, seed=1), data, cfg)
        for pa, pb in zip(a.params(), b.params()):
            assert pa.tobytes() == pb.tobytes()
        assert ta == tb

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            train(build_vae(6, (5,), 2), np.zeros((0, 6)))

    def test_bad_config(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0)

    def test_single_image_reaches_entropy_floor(self):
        x = make_rng(1, "img").uniform(0.05, 0.95, size=(1, 16))
        floor = float(-np.sum(x * np.log(x) + (1 - x) * np.log(1 - x)))
        model, trace = train(build_vae(16, (32,), 2, seed=0), x, TrainConfig(learning_rate=1e-2, epochs=600, seed=0))
        first, last = trace[0]["mean_bce"], trace[-1]["mean_bce"]
        assert last - floor < 0.02 * (first - floor)

    def test_trace_csv(self, tmp_path):
        data = make_rng(0, "data").uniform(size=(20, 6))
        _, trace = train(build_vae(6, (5,), 2), data, TrainConfig(epochs=2, batch_size=10))
        write_trace_csv(trace, tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "epoch,mean_neg_elbo,mean_bce,mean_kl"
        assert len(lines) == 3
        assert all(isinstance(v, float) for v in trace[0].values() if not isinstance(v, int))


class TestDecoder:
    def test_architecture_and_range(self, tmp_path):
        model = build_vae(seed=0)
        dec = decoder_of(model)
        assert dec.layer_dims == [20, 500, 500, 784]
        assert model.encoder.layer_dims == [784, 500, 500, 40]
        out = forward(dec, np.zeros(20))
        assert out.shape == (784,) and np.all((out > 0) & (out < 1))
        save_weights(dec, tmp_path / "d.mlpw")
        z = make_rng(0, "z").normal(size=(3, 20))
        assert forward(load_weights(tmp_path / "d.mlpw"), z).tobytes() == forward(dec, z).tobytes()
