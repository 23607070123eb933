"""Fixed-step explicit integrators shared by the simulators and samplers."""

from __future__ import annotations

from typing import Callable

import numpy as np

SCHEMES = ("euler", "rk4")


def euler_step(f: Callable, t: float, y: np.ndarray, h: float) -> np.ndarray:
    return y + h * f(t, y)


def rk4_step(f: Callable, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


STEPPERS = {"euler": euler_step, "rk4": rk4_step}


def uniform_grid(n: int, t0: float = 0.0, t1: float = 1.0) -> np.ndarray:
    if n < 1:
        raise ValueError("number of steps must be >= 1")
    return np.linspace(t0, t1, n + 1)


def integrate(f: Callable, y0, grid, scheme: str = "rk4", *, keep_path: bool = False):
    """Integrate y' = f(t, y) across the nodes of ``grid``.

    Returns the final state, or the (len(grid), ...) path when ``keep_path``.
    """
    try:
        step = STEPPERS[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}") from None
    grid = np.asarray(grid, dtype=np.float64)
    y = np.array(y0, dtype=np.float64)
    path = [y] if keep_path else None
    for t, t_next in zip(grid[:-1], grid[1:]):
        y = step(f, float(t), y, float(t_next - t))
        if keep_path:
            path.append(y)
    return np.stack(path) if keep_path else y


def observed_order(errors, steps) -> float:
    """Least-squares slope of log(error) against log(step size)."""
    errors = np.asarray(errors, dtype=np.float64)
    steps = np.asarray(steps, dtype=np.float64)
    slope, _ = np.polyfit(np.log(steps), np.log(errors), 1)
    return float(slope)
