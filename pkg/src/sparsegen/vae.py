"""A small fully-connected VAE trained with manual backprop and Adam.

The decoder (``latent -> 500 -> 500 -> 784`` with a sigmoid output) is the
generator used for recovery.  The likelihood is Bernoulli on pixel
intensities in ``[0, 1]`` and the posterior is a diagonal Gaussian whose mean
and log-variance are the two halves of the encoder output.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .adam import Adam
from .core import make_rng
from .genmodel import GeneratorNetwork, backprop, forward_cached, mlp

__all__ = [
    "VaeModel",
    "TrainConfig",
    "ElboResult",
    "build_vae",
    "elbo",
    "train",
    "decoder_of",
    "write_trace_csv",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class VaeModel:
    encoder: GeneratorNetwork
    decoder: GeneratorNetwork

    def __post_init__(self):
        latent = self.decoder.k
        if self.encoder.n != 2 * latent:
            raise ValueError(f"encoder output {self.encoder.n} must be twice the latent dim {latent}")
        if self.encoder.k != self.decoder.n:
            raise ValueError("encoder input and decoder output dims differ")

    @property
    def latent_dim(self) -> int:
        return self.decoder.k

    def params(self) -> list[np.ndarray]:
        return [*self.encoder.weights, *self.encoder.biases, *self.decoder.weights, *self.decoder.biases]

    def with_params(self, params) -> "VaeModel":
        ne, nd = self.encoder.depth, self.decoder.depth
        enc = self.encoder.with_params(params[:ne], params[ne : 2 * ne])
        dec = self.decoder.with_params(params[2 * ne : 2 * ne + nd], params[2 * ne + nd :])
        return VaeModel(enc, dec)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 10
    batch_size: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


@dataclass
class ElboResult:
    """Batch-mean negative ELBO, its two terms, and gradients in ``model.params()`` order."""

    loss: float
    bce: float
    kl: float
    grads: list

    def __iter__(self):
        yield self.loss
        yield self.grads


def build_vae(input_dim: int = 784, hidden=(500, 500), latent_dim: int = 20, seed: int = 0) -> VaeModel:
    """Randomly initialised VAE; hidden layers are ReLU.

    Output layers use ``N(0, 1/fan_in)`` weights so initial log-variances and
    logits stay moderate.
    """
    enc = mlp([input_dim, *hidden, 2 * latent_dim], make_rng(seed, "encoder").integers(0, 2**63),
              hidden="relu", output="identity", output_gain=1.0)
    dec = mlp([latent_dim, *hidden[::-1], input_dim], make_rng(seed, "decoder").integers(0, 2**63),
              hidden="relu", output="sigmoid", output_gain=1.0)
    return VaeModel(enc, dec)


def _softplus(a):
    return np.logaddexp(0.0, a)


def elbo(model: VaeModel, batch, rng=None, eta=None) -> ElboResult:
    """Negative ELBO averaged over the batch, with exact gradients.

    ``loss = mean_i [BCE(x_i, dec(z_i)) + KL(N(mu_i, sigma_i^2) || N(0, I))]``
    with one reparameterised sample ``z = mu + sigma * eta``.  Supply either
    ``rng`` (a :class:`~sparsegen.core.SeededRng`) or the noise ``eta``
    directly; with neither, ``eta = 0`` (the posterior mean).
    """
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if x.shape[1] != model.encoder.k:
        raise ValueError(f"batch has {x.shape[1]} features, model expects {model.encoder.k}")
    if np.any(x < 0) or np.any(x > 1) or not np.all(np.isfinite(x)):
        raise ValueError("pixel values must lie in [0, 1]")
    bsz = x.shape[0]
    lat = model.latent_dim
    if eta is None:
        eta = rng.normal(size=(bsz, lat)) if rng is not None else np.zeros((bsz, lat))
    eta = np.asarray(eta, dtype=np.float64).reshape(bsz, lat)

    enc_out, enc_cache = forward_cached(model.encoder, x)
    mu, logvar = enc_out[:, :lat], enc_out[:, lat:]
    var = np.exp(logvar)
    std = np.sqrt(var)
    z = mu + std * eta

    probs, dec_cache = forward_cached(model.decoder, z)
    logits = dec_cache[1][-1]
    bce_each = np.sum(_softplus(logits) - x * logits, axis=1)
    kl_each = 0.5 * np.sum(mu * mu + var - logvar - 1.0, axis=1)
    bce = float(np.mean(bce_each))
    kl = float(np.mean(kl_each))

    # d loss / d logits of the fused sigmoid + BCE
    d_logits = (probs - x) / bsz
    dz, (dec_dw, dec_db) = backprop(model.decoder, dec_cache, d_logits, wrt_preactivation=True, param_grads=True)
    d_mu = dz + mu / bsz
    d_logvar = dz * eta * 0.5 * std + 0.5 * (var - 1.0) / bsz
    _, (enc_dw, enc_db) = backprop(model.encoder, enc_cache, np.hstack([d_mu, d_logvar]), param_grads=True)
    grads = [*enc_dw, *enc_db, *dec_dw, *dec_db]
    return ElboResult(bce + kl, bce, kl, grads)


def train(model: VaeModel, dataset, cfg: TrainConfig = TrainConfig(), callback=None):
    """Fit the VAE with Adam over shuffled minibatches.

    Returns ``(trained_model, trace)`` where ``trace`` holds one dict per
    epoch with keys ``epoch``, ``mean_neg_elbo``, ``mean_bce`` and
    ``mean_kl`` (sample-weighted means of the minibatch values seen during
    that epoch).  Fully determined by ``cfg.seed``.
    """
    data = np.asarray(dataset, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("dataset must be a non-empty 2-D array of flattened images")
    params = [p.copy() for p in model.params()]
    opt = Adam([p.shape for p in params], lr=cfg.learning_rate)
    current = model
    trace = []
    n = data.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = make_rng(cfg.seed, "shuffle", epoch).permutation(n)
        tot = np.zeros(3)
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            res = elbo(current, data[idx], rng=make_rng(cfg.seed, "eta", epoch, bi))
            if not np.isfinite(res.loss):
                raise FloatingPointError(f"non-finite ELBO at epoch {epoch}, batch {bi}")
            opt.step(params, res.grads)
            current = current.with_params(params)
            tot += len(idx) * np.array([res.loss, res.bce, res.kl])
        row = {"epoch": epoch, "mean_neg_elbo": float(tot[0] / n), "mean_bce": float(tot[1] / n),
               "mean_kl": float(tot[2] / n)}
        trace.append(row)
        log.info("epoch %d: -elbo %.3f (bce %.3f, kl %.3f)", epoch, *tot / n)
        if callback is not None:
            callback(row)
    return current, trace


def decoder_of(model: VaeModel) -> GeneratorNetwork:
    return model.decoder


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "mean_neg_elbo", "mean_bce", "mean_kl"])
        for row in trace:
            w.writerow([row["epoch"], repr(row["mean_neg_elbo"]), repr(row["mean_bce"]), repr(row["mean_kl"])])
