"""Conditional flow matching training over latent sequences.

One training sample follows the per-sample recipe: pick a sequence, a
target index tau in {3..m}, a flow time t, a path point
Z ~ p_t(. | z^tau, z^{tau-1}), its regression target, and a condition index
c in {1..tau-2}; the model sees (Z, z^{tau-1}, z^c, tau - c, t).
Batches run that recipe independently per element.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from bridgeflow.codec import LinearCodec
from bridgeflow.model import Batch, VectorFieldModel
from bridgeflow.paths import ConditionPair, PathPoint, PathSchedule, regression_target, sample_times

WEIGHTINGS = ("none", "score_matching", "score_flow")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 32
    lr: float = 5e-4
    warmup: float = 0.05
    seed: int = 0
    kind: str = "flow"
    weighting: str = "none"
    checkpoint_every: int = 0
    max_loss: float = 1e6

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("train.iterations must be >= 0")
        if self.batch_size < 1:
            raise ValueError("train.batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("train.lr must be positive")
        if not 0.0 <= self.warmup <= 0.5:
            raise ValueError("train.warmup must lie in [0, 0.5]")
        if self.kind not in ("flow", "score", "noise"):
            raise ValueError("train.kind must be flow, score or noise")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"train.weighting must be one of {WEIGHTINGS}")


@dataclass
class TrainTrace:
    losses: list[float] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)
    epoch_wall_ms: list[float] = field(default_factory=list)
    model: VectorFieldModel | None = None
    seed: int = 0

    def write_csv(self, path, *, wall_clock: bool = True) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["iteration", "loss", "lr"] + (["wall_ms"] if wall_clock else []))
            for i, (loss, lr) in enumerate(zip(self.losses, self.lrs)):
                row = [i, repr(loss), repr(lr)]
                if wall_clock:
                    row.append(f"{self.wall_ms[i]:.3f}")
                writer.writerow(row)


def warmup_cosine(i: int, total: int, base: float, warmup: float) -> float:
    """Linear warmup from 0 over the first ``warmup * total`` iterations,
    then cosine decay to 0 at ``total``."""
    n_warm = int(round(warmup * total))
    if i < n_warm:
        return base * i / n_warm
    span = max(total - n_warm, 1)
    return base * 0.5 * (1.0 + math.cos(math.pi * (i - n_warm) / span))


class Adam:
    """Adaptive moment estimation without weight decay."""

    def __init__(self, params, betas=(0.9, 0.999), eps=1e-8):
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(q) for q in params]
        self.v = [np.zeros_like(q) for q in params]
        self.step_count = 0

    def step(self, params, grads, lr):
        self.step_count += 1
        c1 = 1.0 - self.b1 ** self.step_count
        c2 = 1.0 - self.b2 ** self.step_count
        out = []
        for q, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            out.append(q - lr * (m / c1) / (np.sqrt(v / c2) + self.eps))
        return out


def _sample_weight(schedule: PathSchedule, t, weighting: str):
    if weighting == "none":
        return None
    if weighting == "score_matching":
        return schedule.c(t) ** 2
    try:
        bmin, bmax = schedule.params["beta_min"], schedule.params["beta_max"]
    except KeyError:
        raise ValueError("score_flow weighting needs a schedule with beta_min/beta_max") from None
    return bmin + (1.0 - t) * (bmax - bmin)


def sample_cfm_batch(
    latents: np.ndarray,
    schedule: PathSchedule,
    rng: np.random.Generator,
    size: int,
    kind: str = "flow",
    weighting: str = "none",
) -> Batch:
    """Draw ``size`` independent training samples from (N, m, p) latent sequences."""
    latents = np.asarray(latents, dtype=np.float64)
    n, m, p = latents.shape
    if m < 3:
        raise ValueError("sequences must hold at least 3 states")
    seq = rng.integers(0, n, size)
    tau = rng.integers(3, m + 1, size)  # 1-based target index
    t = sample_times(schedule, rng, size)
    pair = ConditionPair(latents[seq, tau - 2], latents[seq, tau - 1])
    mean_a, mean_b, c = schedule.coefficients(t)
    xi = rng.standard_normal((size, p))
    z = mean_a[:, None] * pair.z0 + mean_b[:, None] * pair.z1 + c[:, None] * xi
    target = regression_target(schedule, pair, PathPoint(t, z, xi), kind)
    cond = rng.integers(1, tau - 1)  # 1-based, in {1..tau-2}
    return Batch(
        z=z,
        z_ref=pair.z0,
        z_cond=latents[seq, cond - 1],
        gap=(tau - cond).astype(np.float64),
        t=t,
        target=target,
        weight=_sample_weight(schedule, t, weighting),
    )


def cfm_step(model, codec: LinearCodec, traj_states, schedule: PathSchedule, rng, kind="flow"):
    """Loss and gradient of one training sample drawn from one sequence."""
    states = np.asarray(traj_states, dtype=np.float64)
    if len(states) < 3:
        raise ValueError("trajectory too short: need at least 3 states")
    batch = sample_cfm_batch(codec.encode(states)[None], schedule, rng, 1, kind)
    return model.loss_and_grad(batch)


def zero_model_loss(latents, schedule, rng, samples=20000, kind="flow", weighting="none") -> float:
    """Monte Carlo E||target||^2, the loss of the model that outputs 0."""
    batch = sample_cfm_batch(latents, schedule, rng, samples, kind, weighting)
    sq = np.sum(batch.target ** 2, axis=1)
    if batch.weight is not None:
        sq = sq * batch.weight
    return float(sq.mean())


def train(
    config: TrainConfig,
    sequences,
    codec: LinearCodec,
    schedule: PathSchedule,
    model: VectorFieldModel | None = None,
    *,
    model_kwargs: dict | None = None,
    on_checkpoint: Callable[[int, VectorFieldModel], None] | None = None,
) -> TrainTrace:
    """Run ``config.iterations`` Adam steps on batched CFM samples.

    ``sequences`` is an (N, m, d) array of normalized data sequences; they
    are encoded once up front. The model is initialized from seed
    ``(seed, 0)`` and batches are drawn from seed ``(seed, 1)``.
    """
    sequences = np.asarray(sequences, dtype=np.float64)
    if sequences.ndim != 3 or len(sequences) == 0:
        raise ValueError("dataset must be a nonempty (N, m, d) array")
    latents = codec.encode(sequences)
    if model is None:
        model = VectorFieldModel.init(codec.p, np.random.default_rng([config.seed, 0]), **(model_kwargs or {}))
    rng = np.random.default_rng([config.seed, 1])
    trace = TrainTrace(seed=config.seed)
    params = model.params()
    opt = Adam(params)
    per_epoch = len(sequences)
    epoch_ms = 0.0
    for i in range(config.iterations):
        start = time.perf_counter()
        lr = warmup_cosine(i, config.iterations, config.lr, config.warmup)
        batch = sample_cfm_batch(latents, schedule, rng, config.batch_size, config.kind, config.weighting)
        loss, grads = model.loss_and_grad(batch)
        if not math.isfinite(loss) or loss > config.max_loss:
            raise TrainingDiverged(f"loss {loss:.4g} at iteration {i} exceeds {config.max_loss:g}")
        params = opt.step(params, grads, lr)
        model = model.with_params(params)
        elapsed = (time.perf_counter() - start) * 1e3
        trace.losses.append(loss)
        trace.lrs.append(lr)
        trace.wall_ms.append(elapsed)
        epoch_ms += elapsed
        if (i + 1) % per_epoch == 0:
            trace.epoch_wall_ms.append(epoch_ms)
            epoch_ms = 0.0
        if on_checkpoint and config.checkpoint_every and (i + 1) % config.checkpoint_every == 0:
            on_checkpoint(i + 1, model)
    trace.model = model
    return trace


def iterations_to_fraction(losses, baseline: float, fraction: float = 0.5, window: int = 50):
    """First iteration whose trailing ``window``-mean loss is at most
    ``fraction * baseline``; None when never reached."""
    losses = np.asarray(losses, dtype=np.float64)
    if len(losses) < window:
        return None
    csum = np.concatenate([[0.0], np.cumsum(losses)])
    trailing = (csum[window:] - csum[:-window]) / window
    hits = np.nonzero(trailing <= fraction * baseline)[0]
    return int(hits[0] + window - 1) if len(hits) else None
