"""Feed-forward generator networks ``G: R^k -> R^n`` with exact reverse-mode gradients.

A network is a chain of affine maps ``a = W h + b`` each followed by an
elementwise activation (``identity``, ``relu`` or ``sigmoid``).  Weights are
stored as ``(out, in)`` matrices.  All evaluation routines accept either a
single latent vector of shape ``(k,)`` or a batch of shape ``(B, k)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .core import make_rng
from .errors import BadMagicError, FormatError, ShapeMismatchError, TruncatedFileError

__all__ = [
    "ACTIVATIONS",
    "GeneratorNetwork",
    "forward",
    "forward_cached",
    "backprop",
    "vjp",
    "lipschitz_upper",
    "spectral_norm",
    "zero_generator",
    "affine_generator",
    "random_relu_generator",
    "mlp",
    "save_weights",
    "load_weights",
]

ACTIVATIONS = {"identity": 0, "relu": 1, "sigmoid": 2}
_ACT_BY_CODE = {v: k for k, v in ACTIVATIONS.items()}
_ACT_LIPSCHITZ = {"identity": 1.0, "relu": 1.0, "sigmoid": 0.25}

WEIGHTS_MAGIC = b"MLPW"
WEIGHTS_VERSION = 1


@dataclass(frozen=True)
class GeneratorNetwork:
    weights: tuple
    biases: tuple
    activations: tuple

    def __post_init__(self):
        ws = tuple(np.array(w, dtype=np.float64, order="C") for w in self.weights)
        bs = tuple(np.array(b, dtype=np.float64).ravel() for b in self.biases)
        acts = tuple(self.activations)
        if not ws:
            raise ValueError("a network needs at least one layer")
        if not (len(ws) == len(bs) == len(acts)):
            raise ValueError("weights, biases and activations must have equal length")
        for i, (w, b, act) in enumerate(zip(ws, bs, acts)):
            if w.ndim != 2:
                raise ValueError(f"layer {i}: weight must be 2-D, got shape {w.shape}")
            if b.shape[0] != w.shape[0]:
                raise ValueError(f"layer {i}: bias length {b.shape[0]} != output dim {w.shape[0]}")
            if i > 0 and w.shape[1] != ws[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input dim {w.shape[1]} does not chain with {ws[i - 1].shape[0]}")
            if act not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {act!r}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")
            w.setflags(write=False)
            b.setflags(write=False)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        object.__setattr__(self, "activations", acts)

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def k(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def is_constant(self) -> bool:
        """True when some layer has all-zero weights, so ``G`` ignores ``z``."""
        return any(not np.any(w) for w in self.weights)

    def __call__(self, z):
        return forward(self, z)

    def with_params(self, weights, biases) -> "GeneratorNetwork":
        return GeneratorNetwork(tuple(weights), tuple(biases), self.activations)


def _activate(a: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return np.maximum(a, 0.0)
    if act == "sigmoid":
        return expit(a)
    return a


def _as_batch(g: GeneratorNetwork, z) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    z2 = z[None, :] if single else z
    if z2.ndim != 2 or z2.shape[1] != g.k:
        raise ValueError(f"latent code shape {z.shape} does not match k={g.k}")
    return z2, single


def forward_cached(g: GeneratorNetwork, z):
    """Evaluate ``G`` and keep per-layer inputs and pre-activations for backprop.

    Returns ``(output, cache)``; the output is 2-D ``(B, n)`` even for a
    single code.  The cache is private to this call, so concurrent
    evaluations never share scratch space.
    """
    h, _ = _as_batch(g, z)
    inputs, pre = [], []
    for w, b, act in zip(g.weights, g.biases, g.activations):
        inputs.append(h)
        a = h @ w.T + b
        pre.append(a)
        h = _activate(a, act)
    return h, (inputs, pre, h)


def forward(g: GeneratorNetwork, z) -> np.ndarray:
    """``G(z)`` for one code (returns ``(n,)``) or a batch (returns ``(B, n)``)."""
    z2, single = _as_batch(g, z)
    h = z2
    for w, b, act in zip(g.weights, g.biases, g.activations):
        h = _activate(h @ w.T + b, act)
    return h[0] if single else h


def backprop(g: GeneratorNetwork, cache, cotangent, *, wrt_preactivation=False, param_grads=False):
    """Reverse-mode sweep through a cached forward pass.

    Parameters
    ----------
    cotangent : ndarray, shape (B, n)
        Gradient with respect to the network output, or with respect to the
        last pre-activation when ``wrt_preactivation`` is set (useful when the
        loss is fused with a final sigmoid).
    param_grads : bool
        Also return gradients for every weight and bias.

    Returns
    -------
    dz : ndarray, shape (B, k)
    (dws, dbs) : lists, only when ``param_grads`` is true.
    """
    inputs, pre, out = cache
    gout = np.asarray(cotangent, dtype=np.float64)
    if gout.ndim == 1:
        gout = gout[None, :]
    dws = [None] * g.depth
    dbs = [None] * g.depth
    for i in range(g.depth - 1, -1, -1):
        act = g.activations[i]
        if i == g.depth - 1 and wrt_preactivation:
            ga = gout
        elif act == "relu":
            # subgradient 0 at the kink
            ga = gout * (pre[i] > 0)
        elif act == "sigmoid":
            s = out if i == g.depth - 1 else expit(pre[i])
            ga = gout * s * (1.0 - s)
        else:
            ga = gout
        if param_grads:
            dws[i] = ga.T @ inputs[i]
            dbs[i] = ga.sum(axis=0)
        gout = ga @ g.weights[i]
    if param_grads:
        return gout, (dws, dbs)
    return gout


def vjp(g: GeneratorNetwork, z, cotangent) -> np.ndarray:
    """``J(z)^T u`` where ``J = dG/dz``; batched like :func:`forward`."""
    z2, single = _as_batch(g, z)
    u = np.asarray(cotangent, dtype=np.float64)
    u2 = u[None, :] if u.ndim == 1 else u
    if u2.shape != (z2.shape[0], g.n):
        raise ValueError(f"cotangent shape {u.shape} does not match output dim n={g.n}")
    _, cache = forward_cached(g, z2)
    dz = backprop(g, cache, u2)
    return dz[0] if single else dz


def spectral_norm(w: np.ndarray, iterations: int = 50, tol: float = 1e-8, seed: int = 0) -> float:
    """Largest singular value of ``w`` by power iteration on ``w^T w``."""
    w = np.asarray(w, dtype=np.float64)
    if not np.any(w):
        return 0.0
    v = make_rng(seed, "power-iteration", w.shape).normal(size=w.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iterations):
        u = w @ v
        v_new = w.T @ u
        nv = np.linalg.norm(v_new)
        if nv == 0.0:
            return 0.0
        v = v_new / nv
        new_est = float(np.linalg.norm(w @ v))
        if abs(new_est - est) <= tol * max(new_est, 1e-300):
            est = new_est
            break
        est = new_est
    return est


def lipschitz_upper(g: GeneratorNetwork) -> float:
    """Product over layers of ``||W||_2`` times the activation's Lipschitz constant."""
    total = 1.0
    for w, act in zip(g.weights, g.activations):
        total *= spectral_norm(w) * _ACT_LIPSCHITZ[act]
    return total


def zero_generator(k: int, n: int) -> GeneratorNetwork:
    """``G(z) = 0`` for every ``z``; Sparse-Gen with it reduces to LASSO."""
    if k < 1 or n < 1:
        raise ValueError(f"dimensions must be positive, got k={k}, n={n}")
    return GeneratorNetwork((np.zeros((n, k)),), (np.zeros(n),), ("identity",))


def affine_generator(w, b=None) -> GeneratorNetwork:
    w = np.atleast_2d(np.asarray(w, dtype=np.float64))
    b = np.zeros(w.shape[0]) if b is None else np.asarray(b, dtype=np.float64)
    return GeneratorNetwork((w,), (b,), ("identity",))


def mlp(dims: Sequence[int], seed: int, hidden="relu", output="identity", bias_std=0.0,
        output_gain: float = 2.0) -> GeneratorNetwork:
    """Random MLP with He-normal hidden weights ``N(0, 2/fan_in)``.

    The last layer uses variance ``output_gain / fan_in``.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"need at least two positive dims, got {dims}")
    ws, bs, acts = [], [], []
    for i, (din, dout) in enumerate(zip(dims[:-1], dims[1:])):
        rng = make_rng(seed, "mlp-layer", i)
        last = i == len(dims) - 2
        gain = output_gain if last else 2.0
        ws.append(rng.normal(size=(dout, din), scale=np.sqrt(gain / din)))
        bs.append(rng.normal(size=dout, scale=bias_std) if bias_std > 0 else np.zeros(dout))
        acts.append(output if last else hidden)
    return GeneratorNetwork(tuple(ws), tuple(bs), tuple(acts))


def random_relu_generator(dims: Sequence[int], seed: int = 0, output_activation: str = "identity",
                          bias_std: float = 0.0) -> GeneratorNetwork:
    """ReLU network with He-initialised weights; deterministic given ``seed``."""
    return mlp(dims, seed, hidden="relu", output=output_activation, bias_std=bias_std)


def save_weights(g: GeneratorNetwork, path) -> None:
    """Write the ``MLPW`` layout: header, dims, activation codes, then per-layer W and b."""
    d = g.depth
    parts = [WEIGHTS_MAGIC, struct.pack("<II", WEIGHTS_VERSION, d)]
    parts.append(struct.pack(f"<{d + 1}I", *g.layer_dims))
    parts.append(bytes(ACTIVATIONS[a] for a in g.activations))
    for w, b in zip(g.weights, g.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_weights(path, expected_dims: Sequence[int] | None = None) -> GeneratorNetwork:
    """Read an ``MLPW`` file.

    Raises
    ------
    BadMagicError
        The file does not start with ``MLPW``.
    TruncatedFileError
        The file ends before the announced payload.
    ShapeMismatchError
        Trailing bytes, zero dimensions, or dims differing from ``expected_dims``.
    FormatError
        Unsupported version or activation code.
    """
    data = Path(path).read_bytes()
    if data[:4] != WEIGHTS_MAGIC:
        raise BadMagicError(f"{path}: not an MLPW weight file")
    off = 4
    if len(data) < off + 8:
        raise TruncatedFileError(f"{path}: header truncated")
    version, d = struct.unpack_from("<II", data, off)
    off += 8
    if version != WEIGHTS_VERSION:
        raise FormatError(f"{path}: unsupported MLPW version {version}")
    if d < 1:
        raise ShapeMismatchError(f"{path}: layer count must be positive")
    if len(data) < off + 4 * (d + 1) + d:
        raise TruncatedFileError(f"{path}: layer table truncated")
    dims = list(struct.unpack_from(f"<{d + 1}I", data, off))
    off += 4 * (d + 1)
    codes = data[off : off + d]
    off += d
    if min(dims) < 1:
        raise ShapeMismatchError(f"{path}: zero-sized layer in dims {dims}")
    if expected_dims is not None and list(expected_dims) != dims:
        raise ShapeMismatchError(f"{path}: dims {dims} differ from expected {list(expected_dims)}")
    try:
        acts = tuple(_ACT_BY_CODE[c] for c in codes)
    except KeyError as exc:
        raise FormatError(f"{path}: unknown activation code {exc.args[0]}") from None
    payload = sum(dout * din + dout for din, dout in zip(dims[:-1], dims[1:]))
    if len(data) < off + 8 * payload:
        raise TruncatedFileError(f"{path}: expected {off + 8 * payload} bytes, found {len(data)}")
    if len(data) > off + 8 * payload:
        raise ShapeMismatchError(f"{path}: trailing bytes after payload for dims {dims}")
    ws, bs = [], []
    for din, dout in zip(dims[:-1], dims[1:]):
        ws.append(np.frombuffer(data, "<f8", dout * din, off).reshape(dout, din).astype(np.float64))
        off += 8 * dout * din
        bs.append(np.frombuffer(data, "<f8", dout, off).astype(np.float64))
        off += 8 * dout
    return GeneratorNetwork(tuple(ws), tuple(bs), acts)
