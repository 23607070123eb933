"""Small dynamical systems used as ground truth, and forecasting datasets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from bridgeflow.ode import rk4_step

SYSTEMS = ("damped_oscillator", "lorenz63", "heat1d", "heat2d")
CHANNELS = {"damped_oscillator": 2, "lorenz63": 3, "heat1d": 1, "heat2d": 1}

# explicit-Euler diffusion stability bounds on kappa dt / dx^2
HEAT_STABILITY = {"heat1d": 0.25, "heat2d": 0.125}


@dataclass
class SystemSpec:
    """Physical parameters and initial-condition distribution of a system.

    Heat systems live on the unit interval/square with ``grid`` cells per
    side and zero-flux boundaries. ``x0`` pins the initial state; otherwise
    it is drawn from the system's distribution under the simulation seed.
    """

    kind: str
    omega: float = 1.0
    zeta: float = 0.05
    amplitude: tuple[float, float] = (0.5, 1.5)
    lorenz_sigma: float = 10.0
    lorenz_rho: float = 28.0
    lorenz_beta: float = 8.0 / 3.0
    ic_scale: float = 1.0
    burn_in: int = 0
    kappa: float = 0.01
    grid: int = 16
    modes: int = 3
    substeps: int = 1
    x0: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in SYSTEMS:
            raise ValueError(f"unknown system kind {self.kind!r}; expected one of {SYSTEMS}")
        if self.kind.startswith("heat") and self.grid < 4:
            raise ValueError("grid must be >= 4")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    @property
    def dim(self) -> int:
        if self.kind == "heat1d":
            return self.grid
        if self.kind == "heat2d":
            return self.grid * self.grid
        return CHANNELS[self.kind]

    @property
    def n_channels(self) -> int:
        return CHANNELS[self.kind]

    @property
    def field_shape(self) -> tuple[int, ...]:
        if self.kind == "heat2d":
            return (self.grid, self.grid)
        return (self.dim,)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    system_id: str
    dt: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.states = np.asarray(self.states, dtype=np.float64)
        m = len(self.times)
        if m < 3:
            raise ValueError("a trajectory needs at least 3 states")
        if self.states.ndim != 2 or self.states.shape[0] != m:
            raise ValueError("states must be an (m, d) array matching times")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("trajectory states must be finite")
        if np.max(np.abs(np.diff(self.times) - self.dt)) > 1e-12:
            raise ValueError("times must be evenly spaced by dt")

    @property
    def m(self) -> int:
        return len(self.times)


# -- right-hand sides ---------------------------------------------------------

def _oscillator_rhs(spec: SystemSpec):
    w2, two_zw = spec.omega ** 2, 2.0 * spec.zeta * spec.omega

    def f(t, y):
        return np.array([y[1], -w2 * y[0] - two_zw * y[1]])

    return f


def _lorenz_rhs(spec: SystemSpec):
    s, r, b = spec.lorenz_sigma, spec.lorenz_rho, spec.lorenz_beta

    def f(t, y):
        x, yy, z = y
        return np.array([s * (yy - x), x * (r - z) - yy, x * yy - b * z])

    return f


def heat_laplacian(u: np.ndarray, dx: float) -> np.ndarray:
    """Zero-flux finite-volume Laplacian (edge-replicated ghost cells).

    Interior fluxes cancel pairwise, so the field sum is conserved.
    """
    padded = np.pad(u, 1, mode="edge")
    lap = -2.0 * u.ndim * u
    for axis in range(u.ndim):
        lo = [slice(1, -1)] * u.ndim
        hi = [slice(1, -1)] * u.ndim
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        lap = lap + padded[tuple(lo)] + padded[tuple(hi)]
    return lap / (dx * dx)


def _initial_state(spec: SystemSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.x0 is not None:
        x0 = np.asarray(spec.x0, dtype=np.float64).reshape(-1)
        if x0.size != spec.dim:
            raise ValueError(f"x0 has {x0.size} entries, system dimension is {spec.dim}")
        return x0.copy()
    if spec.kind == "damped_oscillator":
        amp = rng.uniform(*spec.amplitude)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        return np.array([amp * np.cos(phase), -amp * spec.omega * np.sin(phase)])
    if spec.kind == "lorenz63":
        return np.ones(3) + spec.ic_scale * rng.standard_normal(3)
    # heat: random smooth field from the lowest Neumann eigenmodes
    n = spec.grid
    centers = (np.arange(n) + 0.5) / n
    k = np.arange(spec.modes + 1)
    basis = np.cos(np.pi * np.outer(k, centers))  # (modes+1, n)
    decay = 1.0 / (1.0 + k)
    if spec.kind == "heat1d":
        coef = spec.ic_scale * decay * rng.standard_normal(len(k))
        return coef @ basis
    coef = spec.ic_scale * np.outer(decay, decay) * rng.standard_normal((len(k), len(k)))
    return (basis.T @ coef @ basis).reshape(-1)


def check_stability(spec: SystemSpec, dt: float) -> float:
    """Return kappa dt / dx^2 for heat systems; raise if above the bound."""
    if not spec.kind.startswith("heat"):
        return 0.0
    h = dt / spec.substeps
    ratio = spec.kappa * h * spec.grid ** 2
    bound = HEAT_STABILITY[spec.kind]
    if ratio > bound:
        raise ValueError(
            f"{spec.kind}: kappa*dt/dx^2 = {ratio:.4g} exceeds the explicit-scheme bound {bound}"
        )
    return ratio


def simulate(spec: SystemSpec, seed, m: int, dt: float) -> Trajectory:
    """Integrate ``spec`` for ``m`` states spaced ``dt`` apart.

    ODE systems use fixed-step RK4, heat systems forward-Euler finite
    differences; ``spec.substeps`` integration steps separate two stored
    states.
    """
    if m < 3:
        raise ValueError("m must be >= 3")
    if dt <= 0:
        raise ValueError("dt must be positive")
    check_stability(spec, dt)
    rng = np.random.default_rng(seed)
    y = _initial_state(spec, rng)
    h = dt / spec.substeps

    if spec.kind.startswith("heat"):
        shape = spec.field_shape
        dx = 1.0 / spec.grid
        kappa = spec.kappa

        def advance(y):
            u = y.reshape(shape)
            for _ in range(spec.substeps):
                u = u + h * kappa * heat_laplacian(u, dx)
            return u.reshape(-1)
    else:
        f = _oscillator_rhs(spec) if spec.kind == "damped_oscillator" else _lorenz_rhs(spec)

        def advance(y):
            for _ in range(spec.substeps):
                y = rk4_step(f, 0.0, y, h)
            return y

    for _ in range(spec.burn_in):
        y = advance(y)
    states = np.empty((m, spec.dim))
    states[0] = y
    for i in range(1, m):
        y = advance(y)
        states[i] = y
    return Trajectory(np.arange(m) * dt, states, spec.kind, dt)


def simulate_many(spec: SystemSpec, seed: int, n: int, m: int, dt: float) -> list[Trajectory]:
    """``n`` trajectories, trajectory ``i`` seeded with ``(seed, i)``."""
    return [simulate(spec, [seed, i], m, dt) for i in range(n)]


# -- default corpora ----------------------------------------------------------

@dataclass(frozen=True)
class Corpus:
    spec: SystemSpec
    n_traj: int
    m: int
    dt: float
    latent_dim: int


def default_corpus(kind: str) -> Corpus:
    if kind == "damped_oscillator":
        # p is capped at d = 2
        return Corpus(SystemSpec(kind), n_traj=64, m=64, dt=0.1, latent_dim=2)
    if kind == "lorenz63":
        return Corpus(SystemSpec(kind, burn_in=200), n_traj=32, m=128, dt=0.01, latent_dim=3)
    if kind == "heat2d":
        return Corpus(SystemSpec(kind, kappa=0.01, grid=16), n_traj=16, m=32, dt=0.04, latent_dim=8)
    if kind == "heat1d":
        return Corpus(SystemSpec(kind, kappa=0.01, grid=32), n_traj=16, m=32, dt=0.02, latent_dim=8)
    raise ValueError(f"unknown system kind {kind!r}")


# -- datasets -----------------------------------------------------------------

@dataclass
class Normalizer:
    """Per-channel standardization followed by a rescale into [-1, 1].

    States of dimension d are viewed as (d / n_channels, n_channels) with the
    channel as the fastest axis.
    """

    mean: np.ndarray
    std: np.ndarray
    scale: np.ndarray

    @property
    def n_channels(self) -> int:
        return len(self.mean)

    @classmethod
    def fit(cls, states: np.ndarray, n_channels: int) -> "Normalizer":
        x = np.asarray(states, dtype=np.float64).reshape(-1, n_channels)
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        scale = np.abs((x - mean) / std).max(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, std, scale)

    def _view(self, x):
        x = np.asarray(x, dtype=np.float64)
        return x.reshape(x.shape[:-1] + (-1, self.n_channels))

    def normalize(self, x):
        x = np.asarray(x, dtype=np.float64)
        return ((self._view(x) - self.mean) / (self.std * self.scale)).reshape(x.shape)

    def denormalize(self, y):
        y = np.asarray(y, dtype=np.float64)
        return (self._view(y) * (self.std * self.scale) + self.mean).reshape(y.shape)


@dataclass
class DatasetSpec:
    """Normalized (prefix, suffix) windows, one per trajectory."""

    prefixes: np.ndarray  # (N, k, d)
    suffixes: np.ndarray  # (N, l, d)
    normalizer: Normalizer
    k: int
    l: int
    system_id: str = ""
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.prefixes)


def build_dataset(
    trajs: Sequence[Trajectory],
    k: int,
    l: int,
    *,
    n_channels: int = 1,
    normalizer: Normalizer | None = None,
) -> DatasetSpec:
    """Split each trajectory into x^{1..k} and x^{k+1..k+l}, normalized.

    Without ``normalizer`` the statistics are fitted on ``trajs`` (the
    training set); pass the training normalizer when building test sets.
    """
    if not trajs:
        raise ValueError("no trajectories")
    if k < 2:
        raise ValueError("k must be >= 2")
    if l < 1:
        raise ValueError("l must be >= 1")
    m = min(tr.m for tr in trajs)
    if k + l > m:
        raise ValueError(f"k + l = {k + l} exceeds trajectory length {m}")
    if normalizer is None:
        normalizer = Normalizer.fit(np.concatenate([tr.states for tr in trajs]), n_channels)
    windows = np.stack([normalizer.normalize(tr.states[: k + l]) for tr in trajs])
    return DatasetSpec(windows[:, :k], windows[:, k:], normalizer, k, l, trajs[0].system_id)
