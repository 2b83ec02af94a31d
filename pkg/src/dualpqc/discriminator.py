"""Feed-forward discriminator 4 -> 256 -> 128 -> 1 with hand-written backprop.

Hidden layers use LeakyReLU (slope 0.2 for negative inputs; the derivative at
exactly 0 is taken as 0.2) and the output unit a sigmoid.

Checkpoint format (text, version 1)::

    # dualpqc-mlp v1
    layers 4 256 128 1
    <one float per line: W1 row-major, b1, W2 row-major, b2, W3 row-major, b3>

Floats are written with ``repr`` so a save/load round trip is exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import DatasetParseError, DomainError

LAYERS = (4, 256, 128, 1)
ALPHA = 0.2
CHECKPOINT_HEADER = "# dualpqc-mlp v1"


@dataclass
class MlpParams:
    weights: list
    biases: list

    @property
    def layer_sizes(self) -> tuple:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    def to_vector(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b.ravel()]
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, vec, layer_sizes=LAYERS) -> "MlpParams":
        vec = np.asarray(vec, dtype=float)
        weights, biases, pos = [], [], 0
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            weights.append(vec[pos : pos + fan_in * fan_out].reshape(fan_out, fan_in).copy())
            pos += fan_in * fan_out
            biases.append(vec[pos : pos + fan_out].copy())
            pos += fan_out
        if pos != len(vec):
            raise DomainError(f"vector of length {len(vec)} does not fit layers {layer_sizes}")
        return cls(weights, biases)

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass(frozen=True)
class PenaltyConfig:
    lam: float = 7.0
    k: float = 0.01
    c: float = 1.0

    def __post_init__(self):
        if self.lam < 0 or self.c < 0 or self.k <= 0:
            raise DomainError(f"invalid penalty config {self}")


def init_mlp(rng: np.random.Generator, layer_sizes=LAYERS) -> MlpParams:
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpParams(weights, biases)


def zeros_like(params: MlpParams) -> MlpParams:
    return MlpParams([np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases])


def _leaky(z):
    return np.where(z > 0, z, ALPHA * z)


def _leaky_grad(z):
    return np.where(z > 0, 1.0, ALPHA)


def forward_batch(params: MlpParams, x):
    """Scores for each row of ``x``; returns ``(scores, cache)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != params.layer_sizes[0]:
        raise DomainError(f"discriminator takes {params.layer_sizes[0]} inputs, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite discriminator input")
    acts, pre = [x], []
    h = x
    last = len(params.weights) - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        pre.append(z)
        if layer < last:
            h = _leaky(z)
            acts.append(h)
    logit = pre[-1][:, 0]
    return expit(logit), (acts, pre)


def backward_batch(params: MlpParams, cache, upstream_logit):
    """Backprop ``sum_b upstream_logit[b] * logit(x_b)``.

    Returns summed parameter gradients and per-row input gradients.
    """
    acts, pre = cache
    delta = np.asarray(upstream_logit, dtype=float).reshape(-1, 1)
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.weights)
    for layer in range(len(params.weights) - 1, -1, -1):
        if layer < len(params.weights) - 1:
            delta = delta * _leaky_grad(pre[layer])
        grads_w[layer] = delta.T @ acts[layer]
        grads_b[layer] = delta.sum(axis=0)
        delta = delta @ params.weights[layer]
    return MlpParams(grads_w, grads_b), delta


def disc_forward(params: MlpParams, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DomainError("disc_forward takes a single input vector")
    return float(forward_batch(params, x)[0][0])


def disc_backward(params: MlpParams, x, upstream: float):
    """Gradients of ``upstream * D(x)`` with respect to the parameters and ``x``."""
    scores, cache = forward_batch(params, np.asarray(x, dtype=float))
    dlogit = upstream * scores * (1 - scores)
    grads, dx = backward_batch(params, cache, dlogit)
    return grads, dx[0]


def input_gradients(params: MlpParams, x) -> tuple:
    """``(scores, dD/dx)`` for every row of ``x``."""
    scores, cache = forward_batch(params, x)
    _, dx = backward_batch(params, cache, scores * (1 - scores))
    return scores, dx


def gradient_penalty(params: MlpParams, real_batch, cfg: PenaltyConfig):
    """``lam * mean_b max(0, |dD/dx(x_b)| - c)**2`` and its parameter gradient.

    The parameter gradient of each active term needs d|g|/dtheta, a mixed
    second derivative.  It is taken as a central difference of dD/dtheta
    along the unit input-gradient direction u_b with probe step ``cfg.k``:
    (dD/dtheta(x_b + k u_b) - dD/dtheta(x_b - k u_b)) / (2k).
    """
    x = np.atleast_2d(np.asarray(real_batch, dtype=float))
    if x.shape[0] == 0:
        raise DomainError("gradient penalty needs a nonempty batch")
    _, g = input_gradients(params, x)
    norms = np.linalg.norm(g, axis=1)
    excess = np.maximum(0.0, norms - cfg.c)
    penalty = cfg.lam * float(np.mean(excess**2))
    active = excess > 0
    if cfg.lam == 0 or not np.any(active):
        return penalty, zeros_like(params)
    u = g[active] / norms[active, None]
    weight = cfg.lam * 2 * excess[active] / (x.shape[0] * 2 * cfg.k)
    probes = np.vstack([x[active] + cfg.k * u, x[active] - cfg.k * u])
    scores, cache = forward_batch(params, probes)
    upstream = np.concatenate([weight, -weight]) * scores * (1 - scores)
    grads, _ = backward_batch(params, cache, upstream)
    return penalty, grads


def save_checkpoint(params: MlpParams, path) -> None:
    lines = [CHECKPOINT_HEADER, "layers " + " ".join(str(s) for s in params.layer_sizes)]
    lines += [repr(float(v)) for v in params.to_vector()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> MlpParams:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2 or lines[0].strip() != CHECKPOINT_HEADER:
        raise DatasetParseError(f"{path}: not a version-1 discriminator checkpoint", line=1)
    head = lines[1].split()
    if not head or head[0] != "layers":
        raise DatasetParseError(f"{path}: missing layers header", line=2)
    sizes = tuple(int(s) for s in head[1:])
    try:
        values = [float(v) for v in lines[2:] if v.strip()]
    except ValueError as exc:
        raise DatasetParseError(f"{path}: {exc}") from None
    return MlpParams.from_vector(values, sizes)
