"""Linear (principal-component) encoder/decoder pair."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LinearCodec:
    """encode(x) = basis^T (x - mean), decode(z) = basis z + mean.

    ``basis`` is d x p with orthonormal columns, so decode(encode(x)) is the
    orthogonal projection onto the fitted affine subspace.
    """

    basis: np.ndarray
    mean: np.ndarray

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=np.float64)
        mean = np.asarray(self.mean, dtype=np.float64)
        if basis.ndim != 2 or mean.shape != (basis.shape[0],):
            raise ValueError("basis must be (d, p) and mean (d,)")
        if basis.shape[1] > basis.shape[0]:
            raise ValueError("latent dimension p cannot exceed d")
        if not np.allclose(basis.T @ basis, np.eye(basis.shape[1]), atol=1e-10, rtol=0):
            raise ValueError("basis columns must be orthonormal")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "mean", mean)

    @property
    def d(self) -> int:
        return self.basis.shape[0]

    @property
    def p(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def identity(cls, d: int) -> "LinearCodec":
        return cls(np.eye(d), np.zeros(d))

    def encode(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d:
            raise ValueError(f"expected data dimension {self.d}, got {x.shape[-1]}")
        return (x - self.mean) @ self.basis

    def decode(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != self.p:
            raise ValueError(f"expected latent dimension {self.p}, got {z.shape[-1]}")
        return z @ self.basis.T + self.mean


def fit(states, p: int) -> LinearCodec:
    """Rank-p codec minimizing squared reconstruction error (top-p PCA)."""
    x = np.asarray(states, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("states must be an (N, d) array")
    n, d = x.shape
    if p < 1 or p > min(n, d):
        raise ValueError(f"p = {p} must lie in [1, min(N, d) = {min(n, d)}]")
    mean = x.mean(axis=0)
    _, _, vt = np.linalg.svd(x - mean, full_matrices=False)
    basis = vt[:p].T
    # fix the sign so the largest-magnitude entry of each column is positive
    flip = np.sign(basis[np.argmax(np.abs(basis), axis=0), np.arange(p)])
    return LinearCodec(basis * np.where(flip == 0, 1.0, flip), mean)


def reconstruction_mse(codec: LinearCodec, states) -> float:
    x = np.asarray(states, dtype=np.float64)
    return float(np.mean((codec.decode(codec.encode(x)) - x) ** 2))
