"""Small MLP encoder with hand-written backprop and Adam.

Parameters may be stored in float32 (training) or float64 (gradient
checks); every computation is carried out in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import DegenerateInputError


@dataclass
class EncoderParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def dtype(self):
        return self.weights[0].dtype

    def arrays(self) -> list[np.ndarray]:
        """Parameters in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "EncoderParams":
        return EncoderParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def astype(self, dtype) -> "EncoderParams":
        return EncoderParams([w.astype(dtype) for w in self.weights], [b.astype(dtype) for b in self.biases])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def orthogonal(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    """Semi-orthogonal ``(fan_in, fan_out)`` matrix (orthonormal rows or columns)."""
    g = rng.normal(size=(max(fan_in, fan_out), min(fan_in, fan_out)))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))
    return q if fan_in >= fan_out else q.T


def init_params(dims, rng: np.random.Generator, dtype=np.float32) -> EncoderParams:
    """Orthogonal weights, zero biases. ``dims = [D, hidden..., C]``.

    Near the origin the untrained network is then close to an isometry, so
    initial features keep the angular structure of the inputs.
    """
    if len(dims) < 2:
        raise ValueError("need at least input and output dimensions")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(orthogonal(fan_in, fan_out, rng).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return EncoderParams(weights, biases)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input of every layer
    pre: list[np.ndarray]  # pre-activation of every layer
    norms: np.ndarray  # norm of the final pre-normalization output
    features: np.ndarray
    params_id: int
    version: int
    consumed: bool = field(default=False)


class Encoder:
    """``x -> normalize(W_L tanh(... tanh(x W_0 + b_0) ...) + b_L)``."""

    def __init__(self, params: EncoderParams):
        self.params = params
        self.version = 0

    @classmethod
    def create(cls, dims, rng, dtype=np.float32) -> "Encoder":
        return cls(init_params(dims, rng, dtype))

    @property
    def dims(self) -> list[int]:
        return self.params.dims

    def forward(self, x) -> tuple[np.ndarray, ForwardCache]:
        """Encode a batch ``(B, D)`` (or one vector) into unit-norm features."""
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if h.shape[1] != self.dims[0]:
            raise ValueError(f"expected input dimension {self.dims[0]}, got {h.shape[1]}")
        inputs, pre = [], []
        n_layers = len(self.params.weights)
        for li, (w, b) in enumerate(zip(self.params.weights, self.params.biases)):
            inputs.append(h)
            z = h @ w.astype(np.float64) + b.astype(np.float64)
            pre.append(z)
            h = np.tanh(z) if li < n_layers - 1 else z
        norms = np.sqrt(np.einsum("ij,ij->i", h, h))
        if np.any(norms == 0.0):
            raise DegenerateInputError("encoder output is exactly zero")
        feats = h / norms[:, None]
        return feats, ForwardCache(inputs, pre, norms, feats, id(self.params), self.version)

    def encode(self, x, batch_size: int = 1024) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.vstack([self.forward(x[i : i + batch_size])[0] for i in range(0, len(x), batch_size)])

    def backward(self, cache: ForwardCache, grad_features) -> EncoderParams:
        """Parameter gradients of ``sum(grad_features * features)``.

        Goes through the normalization Jacobian ``(I - f f^T) / ||z||``. A
        cache can be used once and only against unchanged parameters.
        """
        if cache.consumed or cache.params_id != id(self.params) or cache.version != self.version:
            raise RuntimeError("stale forward cache")
        cache.consumed = True
        g = np.atleast_2d(np.asarray(grad_features, dtype=np.float64))
        f = cache.features
        if g.shape != f.shape:
            raise ValueError(f"gradient shape {g.shape} does not match features {f.shape}")
        dz = (g - f * np.einsum("ij,ij->i", f, g)[:, None]) / cache.norms[:, None]

        n_layers = len(self.params.weights)
        gw = [None] * n_layers
        gb = [None] * n_layers
        for li in range(n_layers - 1, -1, -1):
            if li < n_layers - 1:
                dz = dz * (1.0 - np.tanh(cache.pre[li]) ** 2)
            gw[li] = cache.inputs[li].T @ dz
            gb[li] = dz.sum(axis=0)
            if li > 0:
                dz = dz @ self.params.weights[li].astype(np.float64).T
        return EncoderParams(gw, gb)


@dataclass
class OptimizerState:
    lr: float = 0.00035
    weight_decay: float = 0.0005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: EncoderParams, **kwargs) -> "OptimizerState":
        state = cls(**kwargs)
        state.m = [np.zeros_like(a) for a in params.arrays()]
        state.v = [np.zeros_like(a) for a in params.arrays()]
        return state


def adam_step(encoder: Encoder, state: OptimizerState, grads: EncoderParams) -> None:
    """One Adam update with decoupled weight decay, in place.

    ``p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)``.
    """
    params = encoder.params.arrays()
    grad_list = grads.arrays()
    if not state.m:
        state.m = [np.zeros_like(a) for a in params]
        state.v = [np.zeros_like(a) for a in params]
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grad_list, state.m, state.v):
        g = np.asarray(g, dtype=np.float64)
        m64 = state.beta1 * m.astype(np.float64) + (1.0 - state.beta1) * g
        v64 = state.beta2 * v.astype(np.float64) + (1.0 - state.beta2) * g * g
        p64 = p.astype(np.float64)
        update = (m64 / bc1) / (np.sqrt(v64 / bc2) + state.eps) + state.weight_decay * p64
        m[...] = m64
        v[...] = v64
        p[...] = p64 - state.lr * update
    encoder.version += 1


def lr_at(epoch: int, base_lr: float = 0.00035, step: int = 20, gamma: float = 0.1) -> float:
    """Step schedule: ``base_lr * gamma ** (epoch // step)``."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return base_lr * gamma ** (epoch // step)
