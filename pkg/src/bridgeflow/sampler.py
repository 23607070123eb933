"""One-step ODE forecasting with a learned vector field, and rollouts.

Given the prefix x^1..x^{T-1}, the sampler starts at
Y_0 ~ N(E(x^{T-1}), sigma_sam^2 I) and integrates the learned field over
the grid s_0 = 0 < ... < s_N = 1, mapped onto the schedule's [t_min, t_max]. Every integration step draws a fresh
condition offset c in {2..T-1} and evaluates v(Y | Y_0, E(x^{T-c}), c, s);
the RK4 stages within one step share that draw. The estimate is D(Y_N).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from bridgeflow import metrics as _metrics
from bridgeflow.codec import LinearCodec
from bridgeflow.ode import SCHEMES, STEPPERS, uniform_grid
from bridgeflow.paths import PathSchedule

# "previous": Y_0 ~ N(E(x^{T-1}), sigma_sam^2 I) and the field sees Y_0.
# "path": Y_0 = a(t0) E(x^{T-1}) + c(t0) xi, the schedule's own starting
#         marginal, and the field sees E(x^{T-1}) as in training.
STARTS = ("previous", "path")


@dataclass
class SamplerConfig:
    scheme: str = "rk4"
    steps: int = 10
    sigma_sam: float = 0.0
    ensemble: int = 1
    seed: int = 0
    grid: np.ndarray | None = None
    start: str = "previous"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"sampler.scheme must be one of {SCHEMES}")
        if self.steps < 1:
            raise ValueError("sampler.steps must be >= 1")
        if self.sigma_sam < 0:
            raise ValueError("sampler.sigma_sam must be >= 0")
        if self.ensemble < 1:
            raise ValueError("sampler.ensemble must be >= 1")
        if self.start not in STARTS:
            raise ValueError(f"sampler.start must be one of {STARTS}")
        if self.grid is not None:
            g = np.asarray(self.grid, dtype=np.float64)
            if g.ndim != 1 or len(g) < 2 or g[0] != 0.0 or g[-1] != 1.0 or np.any(np.diff(g) <= 0):
                raise ValueError("sampler.grid must increase strictly from 0 to 1")
            self.grid = g
            self.steps = len(g) - 1

    def time_grid(self) -> np.ndarray:
        return uniform_grid(self.steps) if self.grid is None else self.grid


def _forecast_latent(model, latents: np.ndarray, cfg: SamplerConfig, rng, schedule: PathSchedule | None = None):
    """Advance (B, T-1, p) prefix latents to (B, p) forecasts."""
    b, n_prev, p = latents.shape
    if n_prev < 2:
        raise ValueError("prefix too short: need at least 2 previous states")
    step = STEPPERS[cfg.scheme]
    t0, t1 = (0.0, 1.0) if schedule is None else (schedule.t_min, schedule.t_max)
    grid = t0 + cfg.time_grid() * (t1 - t0)
    rows = np.arange(b)
    if cfg.start == "path":
        if schedule is None:
            raise ValueError("sampler.start = 'path' needs a schedule")
        a0, _, c0 = schedule.coefficients(t0)
        y = a0 * latents[:, -1] + c0 * rng.standard_normal((b, p))
        y0 = latents[:, -1]
    else:
        y0 = latents[:, -1] + cfg.sigma_sam * rng.standard_normal((b, p))
        y = y0
    for s, s_next in zip(grid[:-1], grid[1:]):
        offset = rng.integers(2, n_prev + 1, size=b)  # c in {2..T-1}
        cond = latents[rows, n_prev - offset]  # E(x^{T-c})
        gap = offset.astype(np.float64)

        def field(t, state):
            return model(state, y0, cond, gap, t)

        y = step(field, float(s), y, float(s_next - s))
    return y


def forecast_next(model, codec: LinearCodec, prefix, cfg: SamplerConfig, schedule: PathSchedule | None, rng):
    """Estimate x^T from the prefix x^1..x^{T-1} (shape (T-1, d))."""
    prefix = np.asarray(prefix, dtype=np.float64)
    z = _forecast_latent(model, codec.encode(prefix)[None], cfg, rng, schedule)
    return codec.decode(z[0])


@dataclass
class ForecastReport:
    ensemble: np.ndarray  # (E, B, l, d)
    metrics: dict = field(default_factory=dict)  # name -> (l,) array
    data_range: float = 2.0

    @property
    def mean(self) -> np.ndarray:
        return self.ensemble.mean(axis=0)

    @property
    def horizon(self) -> int:
        return self.ensemble.shape[2]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step"] + list(_metrics.METRIC_NAMES))
            for s in range(self.horizon):
                writer.writerow([s + 1] + [repr(float(self.metrics[k][s])) for k in _metrics.METRIC_NAMES])


def rollout_batch(
    model,
    codec: LinearCodec,
    prefixes,
    horizon: int,
    cfg: SamplerConfig,
    schedule: PathSchedule | None = None,
    *,
    truth=None,
    data_range: float = 2.0,
    field_shape: tuple[int, ...] | None = None,
) -> ForecastReport:
    """Autoregressive forecasts for a (B, k, d) stack of prefixes.

    Ensemble member e draws from ``default_rng([cfg.seed, e])``. When
    ``truth`` (B, l, d) is given, per-step metrics are averaged over members
    and prefixes.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    prefixes = np.asarray(prefixes, dtype=np.float64)
    if prefixes.ndim == 2:
        prefixes = prefixes[None]
    base = codec.encode(prefixes)
    members = []
    for e in range(cfg.ensemble):
        rng = np.random.default_rng([cfg.seed, e])
        latents = base
        outs = []
        for _ in range(horizon):
            z = _forecast_latent(model, latents, cfg, rng, schedule)
            x = codec.decode(z)
            outs.append(x)
            latents = np.concatenate([latents, codec.encode(x)[:, None]], axis=1)
        members.append(np.stack(outs, axis=1))
    ens = np.stack(members)
    if not np.all(np.isfinite(ens)):
        raise FloatingPointError("non-finite forecast")
    report = ForecastReport(ens, data_range=data_range)
    if truth is not None:
        report.metrics = step_metrics(ens, truth, data_range, field_shape)
    return report


def rollout(model, codec, prefix, horizon, cfg, schedule=None, *, truth=None, data_range=2.0, field_shape=None):
    """Single-prefix rollout; ``ensemble`` has shape (E, 1, l, d)."""
    prefix = np.asarray(prefix, dtype=np.float64)
    if truth is not None:
        truth = np.asarray(truth, dtype=np.float64)[None]
    return rollout_batch(
        model, codec, prefix[None], horizon, cfg, schedule,
        truth=truth, data_range=data_range, field_shape=field_shape,
    )


def step_metrics(ensemble, truth, data_range=2.0, field_shape=None) -> dict:
    """Per-step metrics averaged over ensemble members.

    With ``field_shape`` each forecast state is one field (spatial systems).
    Without it the B states of a member at one step are pooled into a single
    (B, d) array, since a low-dimensional state alone gives degenerate
    correlations.
    """
    ens = np.asarray(ensemble, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    n_members, b, horizon, d = ens.shape
    out = {k: np.empty(horizon) for k in _metrics.METRIC_NAMES}
    for s in range(horizon):
        if field_shape is None:
            preds = ens[:, :, s]
            truths = np.broadcast_to(truth[:, s], (n_members, b, d))
        else:
            preds = ens[:, :, s].reshape((-1,) + tuple(field_shape))
            truths = np.broadcast_to(truth[:, s], (n_members, b, d)).reshape((-1,) + tuple(field_shape))
        vals = _metrics.average(preds, truths, data_range)
        for k in out:
            out[k][s] = vals[k]
    return out
