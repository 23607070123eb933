"""Gaussian conditional probability paths.

Every path in this module has the form

    Z_t = a(t) z0 + b(t) z1 + c(t) xi,    xi ~ N(0, I)

with z0 the reference latent (the state before the target) and z1 the
target latent. The affine flow map psi_t(x) = a z0 + b z1 + c x is generated
by the conditional vector field

    u_t(z) = (c'/c) (z - (a z0 + b z1)) + a' z0 + b' z1.

All functions broadcast: ``z0``/``z1``/``z`` may carry leading batch axes as
long as ``t`` broadcasts against those batch axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "BUILTIN_PATHS",
    "ConditionPair",
    "PathPoint",
    "PathSchedule",
    "ScheduleError",
    "SingularScheduleError",
    "conditional_vf",
    "make_builtin",
    "noise_adapted_grid",
    "path_moments",
    "regression_target",
    "sample_point",
    "sample_times",
    "schedule_from_config",
]

BUILTIN_PATHS = ("ve", "vp", "ot", "stochastic_interpolant", "bridge")
TARGET_KINDS = ("flow", "score", "noise")

# ve/vp are singular at t=1 and the stochastic interpolant at both ends;
# their time draws are clipped to [eps, 1 - eps].
DIFFUSION_EPS = 1e-5

Scalar = Callable[[np.ndarray], np.ndarray]


class ScheduleError(ValueError):
    """Bad schedule name, parameter, or evaluation time."""


class SingularScheduleError(ScheduleError):
    """c(t) = 0 where a division by c(t) is required."""


@dataclass(frozen=True)
class PathSchedule:
    """The coefficient triple (a, b, c) of a Gaussian path and its derivatives."""

    name: str
    a: Scalar
    b: Scalar
    c: Scalar
    da: Scalar
    db: Scalar
    dc: Scalar
    params: Mapping[str, float] = field(default_factory=dict)
    t_min: float = 0.0
    t_max: float = 1.0
    deterministic: bool = False

    def coefficients(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.a(t), self.b(t), self.c(t)

    def derivatives(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.da(t), self.db(t), self.dc(t)


@dataclass(frozen=True)
class ConditionPair:
    """Reference latent ``z0`` and target latent ``z1`` (same shape)."""

    z0: np.ndarray
    z1: np.ndarray

    def __post_init__(self):
        z0 = np.asarray(self.z0, dtype=np.float64)
        z1 = np.asarray(self.z1, dtype=np.float64)
        if z0.shape != z1.shape:
            raise ValueError(f"pair dimension mismatch: {z0.shape} vs {z1.shape}")
        if not (np.all(np.isfinite(z0)) and np.all(np.isfinite(z1))):
            raise ValueError("pair entries must be finite")
        object.__setattr__(self, "z0", z0)
        object.__setattr__(self, "z1", z1)


@dataclass(frozen=True)
class PathPoint:
    t: np.ndarray
    z: np.ndarray
    xi: np.ndarray


# -- builtin schedules --------------------------------------------------------

def _const(value: float) -> Scalar:
    return lambda t: np.full(np.shape(t), value, dtype=np.float64)


def _require(params: Mapping[str, float], name: str, keys, *, positive=True):
    out = {}
    for key in keys:
        if key not in params:
            raise ScheduleError(f"{name}: missing parameter {key!r}")
        value = float(params[key])
        if not math.isfinite(value) or (value <= 0 if positive else value < 0):
            kind = "positive" if positive else "nonnegative"
            raise ScheduleError(f"{name}: parameter {key!r} must be {kind}, got {value}")
        out[key] = value
    return out


def _bridge(params, deterministic):
    p = _require(params, "bridge", ("sigma_min", "sigma"), positive=False)
    smin, sig = p["sigma_min"], p["sigma"]
    if smin == 0.0 and sig == 0.0 and not deterministic:
        raise ScheduleError(
            "bridge: sigma_min = sigma = 0 gives c(t) = 0; "
            "pass deterministic=True to opt into the degenerate test mode"
        )
    s2, m2 = sig * sig, smin * smin

    def c(t):
        return np.sqrt(m2 + s2 * t * (1.0 - t))

    def dc(t):
        ct = c(t)
        num = 0.5 * s2 * (1.0 - 2.0 * t)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(ct > 0, num / np.where(ct > 0, ct, 1.0), 0.0)

    return PathSchedule(
        "bridge",
        a=lambda t: 1.0 - t,
        b=lambda t: np.asarray(t, dtype=np.float64) * 1.0,
        c=c,
        da=_const(-1.0),
        db=_const(1.0),
        dc=dc,
        params=p,
        deterministic=deterministic,
    )


def _ot(params):
    if "eps_min" not in params:
        raise ScheduleError("ot: missing parameter 'eps_min'")
    eps = float(params["eps_min"])
    if not (0.0 <= eps < 1.0):
        raise ScheduleError(f"ot: eps_min must lie in [0, 1), got {eps}")
    k = 1.0 - eps
    return PathSchedule(
        "ot",
        a=_const(0.0),
        b=lambda t: np.asarray(t, dtype=np.float64) * 1.0,
        c=lambda t: 1.0 - k * t,
        da=_const(0.0),
        db=_const(1.0),
        dc=_const(-k),
        params={"eps_min": eps},
    )


def _stochastic_interpolant(params):
    p = _require(params, "stochastic_interpolant", ("eps",))
    eps = p["eps"]
    power = int(params.get("b_exponent", 2))
    if power not in (1, 2):
        raise ScheduleError("stochastic_interpolant: b_exponent must be 1 or 2")
    p["b_exponent"] = power

    def c(t):
        return eps * (1.0 - t) * np.sqrt(t)

    def dc(t):
        t = np.asarray(t, dtype=np.float64)
        rt = np.sqrt(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            return eps * (-rt + (1.0 - t) / (2.0 * rt))

    if power == 2:
        b, db = (lambda t: np.asarray(t, dtype=np.float64) ** 2), (lambda t: 2.0 * np.asarray(t, dtype=np.float64))
    else:
        b, db = (lambda t: np.asarray(t, dtype=np.float64) * 1.0), _const(1.0)
    return PathSchedule(
        "stochastic_interpolant",
        a=lambda t: 1.0 - t,
        b=b,
        c=c,
        da=_const(-1.0),
        db=db,
        dc=dc,
        params=p,
        t_min=DIFFUSION_EPS,
        t_max=1.0 - DIFFUSION_EPS,
    )


def _ve(params):
    p = _require(params, "ve", ("sigma_min", "sigma_max"))
    smin, smax = p["sigma_min"], p["sigma_max"]
    if smax <= smin:
        raise ScheduleError("ve: sigma_max must exceed sigma_min")
    log_r = math.log(smax / smin)

    # noise level sigma_s = smin sqrt(r^{2s} - 1), increasing in s, sigma_0 = 0
    def sigma(s):
        return smin * np.sqrt(np.expm1(2.0 * s * log_r))

    def dsigma(s):
        e = np.expm1(2.0 * s * log_r)
        with np.errstate(divide="ignore", invalid="ignore"):
            return smin * (e + 1.0) * log_r / np.sqrt(e)

    return PathSchedule(
        "ve",
        a=_const(1.0),
        b=_const(0.0),
        c=lambda t: sigma(1.0 - np.asarray(t, dtype=np.float64)),
        da=_const(0.0),
        db=_const(0.0),
        dc=lambda t: -dsigma(1.0 - np.asarray(t, dtype=np.float64)),
        params=p,
        t_max=1.0 - DIFFUSION_EPS,
    )


def _vp(params):
    p = _require(params, "vp", ("beta_min", "beta_max"))
    bmin, bmax = p["beta_min"], p["beta_max"]
    if bmax < bmin:
        raise ScheduleError("vp: beta_max must be >= beta_min")

    def T(s):
        return s * bmin + 0.5 * s * s * (bmax - bmin)

    def beta(s):
        return bmin + s * (bmax - bmin)

    def a(t):
        return np.exp(-0.5 * T(1.0 - np.asarray(t, dtype=np.float64)))

    def c(t):
        return np.sqrt(-np.expm1(-T(1.0 - np.asarray(t, dtype=np.float64))))

    def da(t):
        s = 1.0 - np.asarray(t, dtype=np.float64)
        return 0.5 * beta(s) * a(t)

    def dc(t):
        s = 1.0 - np.asarray(t, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            return -0.5 * beta(s) * np.exp(-T(s)) / c(t)

    return PathSchedule(
        "vp",
        a=a,
        b=_const(0.0),
        c=c,
        da=da,
        db=_const(0.0),
        dc=dc,
        params=p,
        t_max=1.0 - DIFFUSION_EPS,
    )


def make_builtin(name: str, params: Mapping[str, float] | None = None, *, deterministic: bool = False) -> PathSchedule:
    """Build one of the five built-in schedules.

    ``params`` keys: ve ``sigma_min, sigma_max``; vp ``beta_min, beta_max``;
    ot ``eps_min``; stochastic_interpolant ``eps`` (optional ``b_exponent`` 1
    or 2, default 2); bridge ``sigma_min, sigma``.
    """
    params = dict(params or {})
    if name == "bridge":
        return _bridge(params, deterministic)
    if deterministic:
        raise ScheduleError("deterministic test mode exists only for the bridge path")
    if name == "ot":
        return _ot(params)
    if name == "stochastic_interpolant":
        return _stochastic_interpolant(params)
    if name == "ve":
        return _ve(params)
    if name == "vp":
        return _vp(params)
    raise ScheduleError(f"unknown path kind {name!r}; expected one of {BUILTIN_PATHS}")


def schedule_from_config(block: Mapping) -> PathSchedule:
    """Build a schedule from a config table such as
    ``{kind = "bridge", sigma_min = 0.001, sigma = 0.01}``."""
    block = dict(block)
    try:
        kind = block.pop("kind")
    except KeyError:
        raise ScheduleError("path: missing 'kind'") from None
    deterministic = bool(block.pop("deterministic", False))
    return make_builtin(kind, block, deterministic=deterministic)


# -- path operations ----------------------------------------------------------

def _check_t(s: PathSchedule, t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > 1.0):
        raise ScheduleError("t must lie in [0, 1]")
    return t


def _col(x: np.ndarray, like: np.ndarray) -> np.ndarray:
    # align per-sample coefficients with the trailing latent axis
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(x.shape + (1,) * (like.ndim - x.ndim)) if x.ndim else x


def path_moments(s: PathSchedule, pair: ConditionPair, t):
    """Mean a z0 + b z1 and standard deviation c of the path at time ``t``."""
    t = _check_t(s, t)
    a, b, c = s.coefficients(t)
    mean = _col(a, pair.z0) * pair.z0 + _col(b, pair.z1) * pair.z1
    return mean, c


def sample_point(s: PathSchedule, pair: ConditionPair, t, rng: np.random.Generator) -> PathPoint:
    mean, c = path_moments(s, pair, t)
    xi = rng.standard_normal(pair.z0.shape)
    return PathPoint(np.asarray(t, dtype=np.float64), mean + _col(c, xi) * xi, xi)


def sample_times(s: PathSchedule, rng: np.random.Generator, size=None):
    """Uniform flow times on [t_min, t_max]."""
    return rng.uniform(s.t_min, s.t_max, size=size)


def _dc_over_c(s: PathSchedule, t: np.ndarray) -> np.ndarray:
    c = s.c(t)
    dc = s.dc(t)
    zero = c == 0
    if np.any(zero):
        # the degenerate test mode has c = c' = 0 identically; the path is then a line
        if not s.deterministic or np.any(np.broadcast_to(dc, np.shape(c))[zero] != 0):
            raise SingularScheduleError(
                f"{s.name}: c(t) = 0; the vector field needs c(t) > 0 (use sigma_min > 0)"
            )
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(zero, 0.0, dc / np.where(zero, 1.0, c))


def conditional_vf(s: PathSchedule, pair: ConditionPair, t, z) -> np.ndarray:
    t = _check_t(s, t)
    z = np.asarray(z, dtype=np.float64)
    a, b, _ = s.coefficients(t)
    da, db, _ = s.derivatives(t)
    ratio = _dc_over_c(s, t)
    mean = _col(a, z) * pair.z0 + _col(b, z) * pair.z1
    return _col(ratio, z) * (z - mean) + _col(da, z) * pair.z0 + _col(db, z) * pair.z1


def regression_target(s: PathSchedule, pair: ConditionPair, pt: PathPoint, kind: str) -> np.ndarray:
    """Target for the flow, score, or noise loss parametrization at ``pt``.

    Score and noise targets come from the stored draw ``pt.xi``, which equals
    (z - mean)/c up to round-off, so the noise target reproduces xi exactly.
    """
    if kind == "flow":
        return conditional_vf(s, pair, pt.t, pt.z)
    if kind not in TARGET_KINDS:
        raise ValueError(f"unknown target kind {kind!r}; expected one of {TARGET_KINDS}")
    c = s.c(_check_t(s, pt.t))
    if np.any(c == 0):
        raise SingularScheduleError(f"{s.name}: {kind} target undefined where c(t) = 0")
    if kind == "noise":
        return pt.xi.copy()
    return -pt.xi / _col(c, pt.xi)


def noise_adapted_grid(s: PathSchedule, t_end: float, n: int, t_start: float = 0.0) -> np.ndarray:
    """Time grid of ``n`` steps on [t_start, t_end] that equidistributes
    dt + |d log c|, so each step sees a bounded change of log c.

    Uniform where c varies slowly; clusters near t_end when c collapses
    there (ve, vp, ot with tiny eps_min).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    span = t_end - t_start
    if span <= 0:
        raise ValueError("t_end must exceed t_start")
    ends = np.geomspace(span * 1e-9, span * 1e-3, 400)
    dense = np.unique(np.concatenate([np.linspace(t_start, t_end, 4001), t_start + ends, t_end - ends]))
    c = s.c(dense)
    if np.any(c <= 0):
        raise SingularScheduleError(f"{s.name}: c(t) must stay positive on [{t_start}, {t_end}]")
    arc = dense + np.concatenate([[0.0], np.cumsum(np.abs(np.diff(np.log(c))))])
    grid = np.interp(np.linspace(arc[0], arc[-1], n + 1), arc, dense)
    grid[0], grid[-1] = t_start, t_end
    return grid
