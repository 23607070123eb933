"""Forecast-quality metrics: MSE, RFNE, PSNR, SSIM and Pearson correlation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

METRIC_NAMES = ("mse", "rfne", "psnr", "ssim", "pearson")
PSNR_CAP = 200.0
SSIM_WINDOW = 8


@dataclass(frozen=True)
class MetricSet:
    mse: float
    rfne: float
    psnr: float
    ssim: float
    pearson: float

    def as_dict(self) -> dict:
        return asdict(self)


def mse(pred, truth) -> float:
    return float(np.mean((np.asarray(pred) - np.asarray(truth)) ** 2))


def rfne(pred, truth) -> float:
    """Relative Frobenius norm error ||pred - truth|| / ||truth||."""
    denom = np.linalg.norm(np.ravel(truth))
    if denom == 0:
        raise ValueError("rfne undefined: truth has zero norm")
    return float(np.linalg.norm(np.ravel(pred) - np.ravel(truth)) / denom)


def psnr(pred, truth, data_range: float) -> float:
    err = mse(pred, truth)
    if err < data_range ** 2 * 1e-20:
        return PSNR_CAP
    return float(10.0 * math.log10(data_range ** 2 / err))


def pearson(pred, truth) -> float:
    x = np.ravel(pred).astype(np.float64)
    y = np.ravel(truth).astype(np.float64)
    x = x - x.mean()
    y = y - y.mean()
    sx, sy = np.sqrt(np.dot(x, x)), np.sqrt(np.dot(y, y))
    if sx == 0 or sy == 0:
        raise ValueError("pearson undefined: zero-variance input")
    return float(np.clip(np.dot(x, y) / (sx * sy), -1.0, 1.0))


def _ssim_from_moments(mx, my, vx, vy, cxy, data_range):
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))


def ssim(pred, truth, data_range: float) -> float:
    """Mean SSIM over all 8x8 windows (stride 1) of a 2-D field.

    Window statistics use uniform weights and population variances. Inputs
    that are not 2-D, or smaller than a window, use one global window.
    """
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    if x.ndim != 2 or min(x.shape) < SSIM_WINDOW:
        x, y = x.ravel(), y.ravel()
        mx, my = x.mean(), y.mean()
        vx = np.mean((x - mx) ** 2)
        vy = np.mean((y - my) ** 2)
        cxy = np.mean((x - mx) * (y - my))
        return float(_ssim_from_moments(mx, my, vx, vy, cxy, data_range))
    wx = sliding_window_view(x, (SSIM_WINDOW, SSIM_WINDOW))
    wy = sliding_window_view(y, (SSIM_WINDOW, SSIM_WINDOW))
    axes = (-2, -1)
    mx, my = wx.mean(axis=axes), wy.mean(axis=axes)
    dx = wx - mx[..., None, None]
    dy = wy - my[..., None, None]
    vx = (dx * dx).mean(axis=axes)
    vy = (dy * dy).mean(axis=axes)
    cxy = (dx * dy).mean(axis=axes)
    return float(_ssim_from_moments(mx, my, vx, vy, cxy, data_range).mean())


def compute(pred, truth, data_range: float = 2.0) -> MetricSet:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    if not data_range > 0:
        raise ValueError("data_range must be positive")
    return MetricSet(
        mse=mse(pred, truth),
        rfne=rfne(pred, truth),
        psnr=psnr(pred, truth, data_range),
        ssim=ssim(pred, truth, data_range),
        pearson=pearson(pred, truth),
    )


def average(preds, truths, data_range: float = 2.0) -> dict:
    """Metrics averaged over a stack of (pred, truth) fields.

    Pearson/RFNE values that are undefined for a pair are skipped; a metric
    undefined for every pair comes back as NaN.
    """
    sums = {name: 0.0 for name in METRIC_NAMES}
    counts = {name: 0 for name in METRIC_NAMES}
    for p, t in zip(preds, truths):
        p = np.asarray(p, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        values = {"mse": mse(p, t), "psnr": psnr(p, t, data_range), "ssim": ssim(p, t, data_range)}
        for name, fn in (("rfne", rfne), ("pearson", pearson)):
            try:
                values[name] = fn(p, t)
            except ValueError:
                pass
        for name, value in values.items():
            sums[name] += value
            counts[name] += 1
    return {name: (sums[name] / counts[name] if counts[name] else float("nan")) for name in METRIC_NAMES}
