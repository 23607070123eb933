"""Desk-scale forecasting experiments on the damped-oscillator corpus.

Shared by the acceptance suite and the scripts in ``scripts/``: one task
builder (simulate, normalize, fit the codec, split prefixes and truth) and
one training-plus-forecast run that reports convergence speed and RFNE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bridgeflow import codec as codec_mod
from bridgeflow import dynamics, sampler, trainer
from bridgeflow.codec import LinearCodec
from bridgeflow.model import VectorFieldModel
from bridgeflow.paths import PathSchedule, make_builtin

PATHS = {
    "bridge": {"sigma_min": 0.001, "sigma": 0.01},
    "ot": {"eps_min": 0.001},
}
MODEL_KWARGS = {"width": 64, "depth": 2, "activation": "softplus", "embed_dim": 16}


@dataclass
class ForecastTask:
    train: np.ndarray  # (N, m, d), normalized
    prefixes: np.ndarray  # (B, k, d)
    truth: np.ndarray  # (B, l, d)
    codec: LinearCodec


def oscillator_task(seed: int = 0, n_train: int = 64, n_test: int = 64, k: int = 16, l: int = 8) -> ForecastTask:
    corpus = dynamics.default_corpus("damped_oscillator")
    trajs = dynamics.simulate_many(corpus.spec, seed, n_train + n_test, corpus.m, corpus.dt)
    states = np.stack([tr.states for tr in trajs])
    norm = dynamics.Normalizer.fit(states[:n_train].reshape(-1, states.shape[-1]), corpus.spec.n_channels)
    states = norm.normalize(states)
    train, test = states[:n_train], states[n_train:]
    codec = codec_mod.fit(train.reshape(-1, train.shape[-1]), corpus.latent_dim)
    return ForecastTask(train, test[:, :k], test[:, k : k + l], codec)


@dataclass
class RunResult:
    path: str
    seed: int
    baseline: float
    losses: np.ndarray
    iters_to_half: int | None
    rfne: float  # final-step RFNE of the forecast
    model: VectorFieldModel


def forecast_rfne(model, task: ForecastTask, schedule: PathSchedule, scfg: sampler.SamplerConfig) -> np.ndarray:
    """Per-step RFNE of an autoregressive forecast over the task's test prefixes."""
    horizon = task.truth.shape[1]
    rep = sampler.rollout_batch(model, task.codec, task.prefixes, horizon, scfg, schedule, truth=task.truth)
    return rep.metrics["rfne"]


def train_on_task(
    task: ForecastTask,
    path: str,
    seed: int,
    *,
    iterations: int = 2000,
    path_params: dict | None = None,
    train_kwargs: dict | None = None,
):
    """Train one model; returns (trace, zero-model baseline loss, schedule)."""
    schedule = make_builtin(path, {**PATHS[path], **(path_params or {})})
    tcfg = trainer.TrainConfig(iterations=iterations, seed=seed, **(train_kwargs or {}))
    latents = task.codec.encode(task.train)
    baseline = trainer.zero_model_loss(latents, schedule, np.random.default_rng([seed, 2]))
    trace = trainer.train(tcfg, task.train, task.codec, schedule, model_kwargs=MODEL_KWARGS)
    return trace, baseline, schedule


def train_and_forecast(
    task: ForecastTask,
    path: str,
    seed: int,
    *,
    iterations: int = 2000,
    path_params: dict | None = None,
    train_kwargs: dict | None = None,
    sampler_cfg: sampler.SamplerConfig | None = None,
) -> RunResult:
    """Train one model on ``task`` and forecast its test prefixes.

    Both paths share every hyperparameter except the schedule. The sampler
    starts from each schedule's own t_min marginal, so the ot path begins
    from its noise distribution as it was trained.
    """
    trace, baseline, schedule = train_on_task(
        task, path, seed, iterations=iterations, path_params=path_params, train_kwargs=train_kwargs
    )
    scfg = sampler_cfg or sampler.SamplerConfig(scheme="rk4", steps=10, start="path", seed=seed)
    rfne = forecast_rfne(trace.model, task, schedule, scfg)
    losses = np.asarray(trace.losses)
    return RunResult(
        path=path,
        seed=seed,
        baseline=baseline,
        losses=losses,
        iters_to_half=trainer.iterations_to_fraction(losses, baseline, 0.5),
        rfne=float(rfne[-1]),
        model=trace.model,
    )


def sigma_sensitivity(task: ForecastTask, sigmas=(0.0, 0.01, 0.1), seeds=range(5), iterations=2000, tail=500):
    """Variance of the last ``tail`` bridge-path losses, shape (len(seeds), len(sigmas))."""
    table = np.empty((len(seeds), len(sigmas)))
    for i, seed in enumerate(seeds):
        for j, sig in enumerate(sigmas):
            trace, _, _ = train_on_task(task, "bridge", seed, iterations=iterations, path_params={"sigma": sig})
            table[i, j] = np.var(trace.losses[-tail:])
    return table


def few_step_rfne(result: RunResult, task: ForecastTask, steps=(10, 50), sampler_seeds=range(10)) -> dict:
    """Horizon-mean RFNE of rk4 forecasts per step count, averaged over sampler seeds."""
    schedule = make_builtin(result.path, PATHS[result.path])
    out = {}
    for n in steps:
        vals = []
        for s in sampler_seeds:
            scfg = sampler.SamplerConfig(scheme="rk4", steps=n, start="path", seed=s)
            vals.append(float(np.mean(forecast_rfne(result.model, task, schedule, scfg))))
        out[n] = float(np.mean(vals))
    return out


def median_iterations(values) -> float:
    """Median with runs that never reached the threshold counted as infinite."""
    return float(np.median([np.inf if v is None else v for v in values]))


__all__ = [
    "ForecastTask", "RunResult", "PATHS", "MODEL_KWARGS",
    "oscillator_task", "train_on_task", "train_and_forecast", "sigma_sensitivity", "few_step_rfne",
    "forecast_rfne", "median_iterations",
]
