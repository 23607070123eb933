"""Fully connected vector-field regressor with hand-written backprop.

Input layout, per sample::

    [ z (p) | z_ref (p) | z_cond (p) | embed(t) (E) | embed(gap) (E) ]

``depth`` counts hidden layers; ``depth=0`` is a single affine map.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

_GELU_C = np.sqrt(2.0 / np.pi)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _softplus_grad(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))  # logistic sigmoid, overflow-free


def _gelu(x):
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x ** 3)))


def _gelu_grad(x):
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    th = np.tanh(inner)
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)


def _tanh_grad(x):
    return 1.0 - np.tanh(x) ** 2


ACTIVATIONS = {
    "softplus": (_softplus, _softplus_grad),
    "gelu": (_gelu, _gelu_grad),
    "tanh": (np.tanh, _tanh_grad),
}


@dataclass(frozen=True)
class TimeEmbedding:
    """Fixed sinusoidal features [sin(f_k x), cos(f_k x)], f_k geometric
    between ``min_freq`` and ``max_freq``. The norm is sqrt(dim / 2)."""

    dim: int = 16
    min_freq: float = 0.5
    max_freq: float = 32.0

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2:
            raise ValueError("embedding dimension must be even and >= 2")

    @property
    def frequencies(self) -> np.ndarray:
        return np.geomspace(self.min_freq, self.max_freq, self.dim // 2)

    def __call__(self, x) -> np.ndarray:
        phase = np.asarray(x, dtype=np.float64)[..., None] * self.frequencies
        return np.concatenate([np.sin(phase), np.cos(phase)], axis=-1)


@dataclass(frozen=True)
class Batch:
    z: np.ndarray
    z_ref: np.ndarray
    z_cond: np.ndarray
    gap: np.ndarray
    t: np.ndarray
    target: np.ndarray
    weight: np.ndarray | None = None

    def __len__(self):
        return len(self.z)


@dataclass(frozen=True)
class VectorFieldModel:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    p: int
    activation: str = "softplus"
    t_embed: TimeEmbedding = field(default_factory=TimeEmbedding)
    gap_embed: TimeEmbedding = field(default_factory=lambda: TimeEmbedding(16, 1.0 / 64.0, 1.0))

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; expected one of {tuple(ACTIVATIONS)}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need matching, nonempty weight and bias lists")
        if self.weights[0].shape[0] != self.input_dim:
            raise ValueError(f"first layer expects {self.weights[0].shape[0]} inputs, layout gives {self.input_dim}")
        if self.weights[-1].shape[1] != self.p:
            raise ValueError("output width must equal p")

    @classmethod
    def init(
        cls,
        p: int,
        rng: np.random.Generator,
        *,
        width: int = 128,
        depth: int = 3,
        activation: str = "softplus",
        embed_dim: int = 16,
    ) -> "VectorFieldModel":
        """Fan-in scaled uniform weights, U(-1/sqrt(fan_in), 1/sqrt(fan_in)); zero biases."""
        t_embed = TimeEmbedding(embed_dim, 0.5, 32.0)
        gap_embed = TimeEmbedding(embed_dim, 1.0 / 64.0, 1.0)
        sizes = [3 * p + 2 * embed_dim] + [width] * depth + [p]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(tuple(weights), tuple(biases), p, activation, t_embed, gap_embed)

    @property
    def input_dim(self) -> int:
        return 3 * self.p + self.t_embed.dim + self.gap_embed.dim

    @property
    def depth(self) -> int:
        return len(self.weights) - 1

    # -- parameters -----------------------------------------------------------

    def params(self) -> list[np.ndarray]:
        """Parameters in layer order: [W0, b0, W1, b1, ...]."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "VectorFieldModel":
        params = [np.asarray(q, dtype=np.float64) for q in params]
        return replace(self, weights=tuple(params[0::2]), biases=tuple(params[1::2]))

    def n_params(self) -> int:
        return sum(q.size for q in self.params())

    # -- evaluation -----------------------------------------------------------

    def features(self, z, z_ref, z_cond, gap, t) -> np.ndarray:
        z, z_ref, z_cond = (np.atleast_2d(np.asarray(v, dtype=np.float64)) for v in (z, z_ref, z_cond))
        n = max(len(z), len(z_ref), len(z_cond))
        for v in (z, z_ref, z_cond):
            if v.shape[-1] != self.p:
                raise ValueError(f"expected latent dimension {self.p}, got {v.shape[-1]}")
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
        gap = np.broadcast_to(np.asarray(gap, dtype=np.float64), (n,))
        return np.concatenate(
            [
                np.broadcast_to(z, (n, self.p)),
                np.broadcast_to(z_ref, (n, self.p)),
                np.broadcast_to(z_cond, (n, self.p)),
                self.t_embed(t),
                self.gap_embed(gap),
            ],
            axis=1,
        )

    def _forward(self, x):
        act, _ = ACTIVATIONS[self.activation]
        pre = []
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = h @ w + b
            pre.append(a)
            h = act(a)
        return h @ self.weights[-1] + self.biases[-1], pre

    def forward(self, z, z_ref, z_cond, gap, t) -> np.ndarray:
        """v_t(z | z_ref, z_cond, gap). Accepts a single sample or a batch."""
        single = np.ndim(z) == 1
        out, _ = self._forward(self.features(z, z_ref, z_cond, gap, t))
        return out[0] if single else out

    __call__ = forward

    def loss_and_grad(self, batch: Batch):
        """Mean (optionally weighted) squared L2 residual and its exact gradient.

        The gradient list follows :meth:`params` order.
        """
        if len(batch) == 0:
            raise ValueError("empty batch")
        target = np.atleast_2d(np.asarray(batch.target, dtype=np.float64))
        if not np.all(np.isfinite(target)):
            raise ValueError("non-finite regression target")
        act, dact = ACTIVATIONS[self.activation]
        x = self.features(batch.z, batch.z_ref, batch.z_cond, batch.gap, batch.t)
        out, pre = self._forward(x)
        n = len(x)
        w = np.ones(n) if batch.weight is None else np.asarray(batch.weight, dtype=np.float64)
        resid = out - target
        loss = float(np.sum(w * np.sum(resid * resid, axis=1)) / n)

        delta = (2.0 / n) * w[:, None] * resid
        grads = [None] * (2 * len(self.weights))
        for layer in range(len(self.weights) - 1, -1, -1):
            h_in = x if layer == 0 else act(pre[layer - 1])
            grads[2 * layer] = h_in.T @ delta
            grads[2 * layer + 1] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * dact(pre[layer - 1])
        return loss, grads


class ZeroField:
    """v = 0 everywhere; the persistence forecaster."""

    def __init__(self, p: int):
        self.p = p

    def __call__(self, z, z_ref, z_cond, gap, t):
        return np.zeros_like(np.asarray(z, dtype=np.float64))


class ConstantField:
    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)
        self.p = self.value.shape[-1]

    def __call__(self, z, z_ref, z_cond, gap, t):
        return np.broadcast_to(self.value, np.shape(z)).copy()
