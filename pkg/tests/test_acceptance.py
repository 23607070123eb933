"""The ten acceptance criteria, each at its stated tolerance and runtime bound.

Every test prints one ``PASS``/``FAIL`` line before asserting, so
``pytest tests/test_acceptance.py -v`` reads as a checklist.
"""

import csv
import time

import numpy as np
import pytest
from scipy.linalg import expm

from bridgeflow import analysis, cli, experiments, metrics
from bridgeflow.codec import LinearCodec
from bridgeflow.model import VectorFieldModel
from bridgeflow.ode import observed_order
from bridgeflow.paths import make_builtin
from bridgeflow.sampler import SamplerConfig, forecast_next
from bridgeflow.trainer import sample_cfm_batch
from oracles import ref_mse, ref_pearson, ref_psnr, ref_rfne, ref_ssim

from conftest import CONFIGS


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def test_01_flow_map_consistency(capsys):
    with Timer() as tm:
        results = analysis.check_flow_maps(draws=20, tol=1e-5)
    worst = max(r.value for r in results)
    ok = all(r.status == analysis.PASS for r in results) and len(results) == 5 and tm.seconds < 10
    report(capsys, 1, ok, f"five schedules, worst L2 error {worst:.2e} < 1e-5, {tm.seconds:.1f} s < 10 s")


def test_02_continuity_equation(capsys):
    with Timer() as tm:
        results = analysis.check_continuity(tol=1e-3, min_gain=3.0)
    worst = max(r.value for r in results)
    ok = all(r.status == analysis.PASS for r in results) and tm.seconds < 30
    details = "; ".join(f"{r.name.split('/')[1]} {r.value:.1e} ({r.detail.split()[2]}x)" for r in results)
    report(capsys, 2, ok, f"max residual {worst:.2e} < 1e-3, gains >= 3 [{details}], {tm.seconds:.1f} s < 30 s")


def test_03_sde_moments(capsys):
    smin, sig = 0.1, 0.5
    with Timer() as tm:
        rep = analysis.sde_moment_check(smin, sig, 0.0, 1.0, checkpoints=(0.25, 0.5, 0.75), paths=10_000, dt=1e-4)
        limit, _, _ = analysis.stochastic_integral_limit(smin, sig, paths=10_000)
    rel = abs(limit - smin ** 2) / smin ** 2
    worst = max(max(r.mean_z(), r.var_z()) for r in rep.rows)
    ok = rep.passed and rel <= 0.05 and tm.seconds < 120
    report(capsys, 3, ok, f"moments within {worst:.2f} SE (<= 3) at t = 0.25/0.5/0.75; Var(M_t->1) = {limit:.5f} "
                          f"vs sigma_min^2 = {smin ** 2} ({100 * rel:.1f}% <= 5%), {tm.seconds:.1f} s < 120 s")


def test_04_vector_field_variance(capsys):
    with Timer() as tm:
        high = analysis.vf_variance_compare(0.99, 1.0, 0.02, 0.1, t_values=(0.0, 0.25), samples=200_000)
        low = analysis.vf_variance_compare(0.0, 1.0, 0.02, 0.1, t_values=(0.0, 0.25), samples=200_000, seed=1)
    ok_high = all(r.var_bridge < r.var_ot and r.separation >= 5 for r in high.rows)
    ok_low = all(r.var_bridge > r.var_ot and r.separation >= 5 for r in low.rows)
    ok = ok_high and ok_low and tm.seconds < 60
    report(capsys, 4, ok,
           f"rho=0.99 bridge lower by >= {min(r.separation for r in high.rows):.0f} SE; "
           f"rho=0 ot lower by >= {min(r.separation for r in low.rows):.0f} SE; {tm.seconds:.1f} s < 60 s")


def _fd_worst(model, batch, h=1e-5):
    _, grads = model.loss_and_grad(batch)
    params = model.params()
    worst = 0.0
    for k, q in enumerate(params):
        for idx in np.ndindex(q.shape):
            plus = [r.copy() for r in params]
            minus = [r.copy() for r in params]
            plus[k][idx] += h
            minus[k][idx] -= h
            fd = (model.with_params(plus).loss_and_grad(batch)[0]
                  - model.with_params(minus).loss_and_grad(batch)[0]) / (2 * h)
            worst = max(worst, abs(fd - grads[k][idx]) / max(abs(fd), abs(grads[k][idx]), 1e-3))
    return worst


def test_05_gradient_check(capsys):
    rng = np.random.default_rng(0)
    with Timer() as tm:
        worst = {}
        for kind in ("flow", "score", "noise"):
            model = VectorFieldModel.init(2, rng, width=8, depth=2, embed_dim=4)
            latents = rng.standard_normal((3, 6, 2))
            batch = sample_cfm_batch(latents, make_builtin("bridge", {"sigma_min": 0.1, "sigma": 0.3}), rng, 4, kind)
            worst[kind] = _fd_worst(model, batch)
    ok = max(worst.values()) < 1e-4 and tm.seconds < 30
    report(capsys, 5, ok, "max relative error " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
           + f" (< 1e-4), {tm.seconds:.1f} s < 30 s")


class LinearField:
    def __init__(self, a):
        self.a = np.asarray(a)

    def __call__(self, z, z_ref, z_cond, gap, t):
        return z @ self.a.T


def test_06_integrator_orders(capsys):
    a = np.array([[0.0, 1.0], [-4.0, -0.3]])
    prefix = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, -0.5]])
    exact = expm(a) @ prefix[-1]
    with Timer() as tm:
        orders = {}
        for scheme in ("euler", "rk4"):
            errs = [np.linalg.norm(forecast_next(LinearField(a), LinearCodec.identity(2), prefix,
                                                 SamplerConfig(scheme=scheme, steps=n), None,
                                                 np.random.default_rng(0)) - exact)
                    for n in (10, 20, 40)]
            orders[scheme] = observed_order(errs, [1 / 10, 1 / 20, 1 / 40])
    ok = abs(orders["euler"] - 1.0) <= 0.2 and abs(orders["rk4"] - 4.0) <= 0.3 and tm.seconds < 10
    report(capsys, 6, ok, f"observed orders euler {orders['euler']:.3f} (1.0 +- 0.2), "
                          f"rk4 {orders['rk4']:.3f} (4.0 +- 0.3), {tm.seconds:.1f} s < 10 s")


def test_07_bridge_converges_faster_than_ot(capsys):
    task = experiments.oscillator_task(0)
    with Timer() as tm:
        runs = {p: [experiments.train_and_forecast(task, p, seed) for seed in range(5)] for p in ("bridge", "ot")}
    med = {p: experiments.median_iterations([r.iters_to_half for r in rs]) for p, rs in runs.items()}
    rfne = {p: float(np.median([r.rfne for r in rs])) for p, rs in runs.items()}
    ok = med["bridge"] <= med["ot"] and rfne["bridge"] <= rfne["ot"] and tm.seconds < 600
    report(capsys, 7, ok, f"median iterations to 50% of baseline: bridge {med['bridge']:.0f} <= ot {med['ot']:.0f}; "
                          f"median final RFNE bridge {rfne['bridge']:.4f} <= ot {rfne['ot']:.4f}; "
                          f"{tm.seconds:.0f} s < 600 s")


def test_08_few_steps_suffice(capsys):
    task = experiments.oscillator_task(0)
    with Timer() as tm:
        run = experiments.train_and_forecast(task, "bridge", 0)
        vals = experiments.few_step_rfne(run, task, steps=(10, 50))
    rel = abs(vals[10] - vals[50]) / vals[50]
    ok = rel <= 0.10 and tm.seconds < 120
    report(capsys, 8, ok, f"rk4 RFNE N=10 {vals[10]:.5f} vs N=50 {vals[50]:.5f}: {100 * rel:.1f}% <= 10%, "
                          f"{tm.seconds:.1f} s < 120 s")


def test_09_metrics_oracle(capsys):
    rng = np.random.default_rng(0)
    refs = {"mse": ref_mse, "rfne": ref_rfne, "pearson": ref_pearson,
            "psnr": lambda x, y: ref_psnr(x, y, 2.0), "ssim": lambda x, y: ref_ssim(x, y, 2.0)}
    worst = 0.0
    with Timer() as tm:
        for _ in range(100):
            truth = rng.uniform(-1, 1, (16, 16))
            pred = truth + 0.3 * rng.standard_normal((16, 16))
            got = metrics.compute(pred, truth, 2.0).as_dict()
            worst = max(worst, max(abs(got[k] - f(pred, truth)) for k, f in refs.items()))
        x = rng.uniform(-1, 1, (16, 16))
        same = metrics.compute(x, x, 2.0)
        edges = (same.mse == 0 and same.rfne == 0 and same.psnr == metrics.PSNR_CAP
                 and abs(same.ssim - 1) < 1e-12 and abs(same.pearson - 1) < 1e-12
                 and abs(metrics.pearson(-x, x) + 1) < 1e-12)
    ok = worst <= 1e-10 and edges and tm.seconds < 5
    report(capsys, 9, ok, f"max deviation from reference {worst:.1e} (<= 1e-10) on 100 pairs; "
                          f"identity/anti-identity cases {'hold' if edges else 'broken'}; {tm.seconds:.1f} s < 5 s")


def _csv_without_wall_clock(path):
    with open(path) as fh:
        table = list(csv.reader(fh))
    drop = [i for i, name in enumerate(table[0]) if name == "wall_ms"]
    return [[v for i, v in enumerate(row) if i not in drop] for row in table]


def test_10_determinism(tmp_path, capsys):
    cfg = str(CONFIGS / "oscillator.toml")
    with Timer() as tm:
        codes = [cli.main(["forecast", "--config", cfg, "--out", str(tmp_path / run)]) for run in ("a", "b")]
    forecast_same = (tmp_path / "a/forecast/forecast.csv").read_bytes() == (tmp_path / "b/forecast/forecast.csv").read_bytes()
    loss_same = _csv_without_wall_clock(tmp_path / "a/train/loss.csv") == _csv_without_wall_clock(tmp_path / "b/train/loss.csv")
    ok = codes == [0, 0] and forecast_same and loss_same and tm.seconds < 300
    report(capsys, 10, ok, f"two train + forecast runs: forecast.csv {'identical' if forecast_same else 'differs'}, "
                           f"loss.csv (without wall_ms) {'identical' if loss_same else 'differs'}; "
                           f"{tm.seconds:.0f} s < 300 s")
