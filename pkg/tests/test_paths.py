import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bridgeflow.paths import (
    BUILTIN_PATHS,
    ConditionPair,
    PathPoint,
    ScheduleError,
    SingularScheduleError,
    conditional_vf,
    make_builtin,
    noise_adapted_grid,
    path_moments,
    regression_target,
    sample_point,
    sample_times,
    schedule_from_config,
)
from oracles import gaussian_vf, schedule_funcs

PARAMS = {
    "bridge": {"sigma_min": 0.1, "sigma": 0.5},
    "ot": {"eps_min": 0.1},
    "stochastic_interpolant": {"eps": 1.0},
    "ve": {"sigma_min": 0.01, "sigma_max": 1.0},
    "vp": {"beta_min": 0.1, "beta_max": 20.0},
}


def interior_times(s, n=100):
    lo, hi = max(s.t_min, 1e-3), min(s.t_max, 1 - 1e-3)
    return np.linspace(lo, hi, n)


# -- construction ---------------------------------------------------------------

def test_bridge_endpoint_noise():
    assert make_builtin("bridge", {"sigma_min": 0.001, "sigma": 0.01}).c(0.0) == pytest.approx(0.001, abs=1e-15)


def test_ve_noise_vanishes_at_its_own_start():
    s = make_builtin("ve", {"sigma_min": 0.01, "sigma_max": 0.1})
    # c(t) = sigma_{1-t}; the schedule's own time 0 of sigma is t = 1
    assert s.c(1.0) == pytest.approx(0.0, abs=1e-15)


def test_bridge_midpoint_noise():
    assert make_builtin("bridge", {"sigma_min": 0.0, "sigma": 1.0}).c(0.5) == pytest.approx(0.5, abs=1e-15)


def test_bridge_noise_shape():
    smin, sig = 0.2, 0.7
    s = make_builtin("bridge", {"sigma_min": smin, "sigma": sig})
    assert s.c(0.0) == pytest.approx(smin) and s.c(1.0) == pytest.approx(smin)
    tt = np.linspace(0, 1, 1001)
    assert tt[np.argmax(s.c(tt))] == pytest.approx(0.5)
    assert s.c(0.5) == pytest.approx(math.sqrt(smin ** 2 + sig ** 2 / 4))


@pytest.mark.parametrize("name", BUILTIN_PATHS)
def test_coefficients_match_symbolic_forms(name):
    s = make_builtin(name, PARAMS[name])
    funcs = schedule_funcs(name, PARAMS[name])
    for t in interior_times(s, 25):
        got = (s.a(t), s.b(t), s.c(t), s.da(t), s.db(t), s.dc(t))
        for g, f in zip(got, funcs):
            assert float(g) == pytest.approx(f(float(t)), rel=1e-10, abs=1e-13)  # 1 - exp(-T) cancels near t = 1


@pytest.mark.parametrize("name", BUILTIN_PATHS)
def test_derivatives_match_central_differences(name):
    s = make_builtin(name, PARAMS[name])
    t = interior_times(s)
    h = 1e-6
    for f, df in ((s.a, s.da), (s.b, s.db), (s.c, s.dc)):
        fd = (f(t + h) - f(t - h)) / (2 * h)
        exact = df(t)
        scale = np.maximum(np.abs(exact), 1.0)
        assert np.max(np.abs(fd - exact) / scale) < 1e-6


@pytest.mark.parametrize(
    "name, params",
    [
        ("nope", {}),
        ("bridge", {"sigma_min": 0.1}),
        ("bridge", {"sigma_min": -0.1, "sigma": 0.1}),
        ("bridge", {"sigma_min": 0.0, "sigma": 0.0}),
        ("ot", {"eps_min": 1.0}),
        ("ve", {"sigma_min": 0.0, "sigma_max": 1.0}),
        ("vp", {"beta_min": 0.1}),
    ],
)
def test_make_builtin_rejects(name, params):
    with pytest.raises(ScheduleError):
        make_builtin(name, params)


def test_deterministic_mode_only_for_bridge():
    s = make_builtin("bridge", {"sigma_min": 0.0, "sigma": 0.0}, deterministic=True)
    assert s.c(0.3) == 0.0
    with pytest.raises(ScheduleError):
        make_builtin("ot", {"eps_min": 0.1}, deterministic=True)


def test_schedule_from_config_block():
    s = schedule_from_config({"kind": "bridge", "sigma_min": 0.001, "sigma": 0.01})
    assert s.name == "bridge" and s.c(0.0) == pytest.approx(0.001)
    with pytest.raises(ScheduleError):
        schedule_from_config({"sigma": 0.1})


def test_singular_time_ranges_are_clipped():
    si = make_builtin("stochastic_interpolant", {"eps": 1.0})
    assert si.t_min > 0 and si.t_max < 1
    for name in ("ve", "vp"):
        assert make_builtin(name, PARAMS[name]).t_max == pytest.approx(1 - 1e-5)
    rng = np.random.default_rng(0)
    t = sample_times(si, rng, 10_000)
    assert t.min() >= si.t_min and t.max() <= si.t_max


# -- moments and sampling ---------------------------------------------------------

def test_moments_bridge_midpoint():
    s = make_builtin("bridge", {"sigma_min": 0.0, "sigma": 1.0})
    mean, std = path_moments(s, ConditionPair(np.array([0.0]), np.array([2.0])), 0.5)
    assert mean == pytest.approx([1.0]) and std == pytest.approx(0.5)


@pytest.mark.parametrize("name", ["bridge", "ve"])
def test_moments_at_zero_when_reference_slot_is_full(name):
    # both have a(0) = 1, b(0) = 0
    s = make_builtin(name, PARAMS[name])
    pair = ConditionPair(np.array([1.5, -2.0]), np.array([0.3, 0.4]))
    mean, std = path_moments(s, pair, 0.0)
    assert mean == pytest.approx(pair.z0) and std == pytest.approx(float(s.c(0.0)))


def test_moments_plugin_oracle():
    # mean = 0.75 z0 + 0.25 z1; std = sqrt(sigma_min^2 + sigma^2 t(1-t))
    s = make_builtin("bridge", {"sigma_min": 0.001, "sigma": 0.01})
    mean, std = path_moments(s, ConditionPair(np.array([1.0, 1.0]), np.array([3.0, -1.0])), 0.25)
    assert mean == pytest.approx([1.5, 0.5], abs=1e-15)
    assert std == pytest.approx(math.sqrt(1e-6 + 1e-4 * 0.1875), rel=1e-14)


def test_moments_reject_bad_time():
    s = make_builtin("bridge", PARAMS["bridge"])
    with pytest.raises(ScheduleError):
        path_moments(s, ConditionPair(np.zeros(1), np.ones(1)), 1.5)


def test_condition_pair_validation():
    with pytest.raises(ValueError):
        ConditionPair(np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        ConditionPair(np.array([np.nan]), np.zeros(1))


def test_sample_point_construction_and_determinism():
    s = make_builtin("bridge", PARAMS["bridge"])
    pair = ConditionPair(np.array([0.5, -1.0, 2.0]), np.array([1.0, 0.0, -1.0]))
    p1 = sample_point(s, pair, 0.3, np.random.default_rng(7))
    p2 = sample_point(s, pair, 0.3, np.random.default_rng(7))
    assert np.array_equal(p1.z, p2.z) and np.array_equal(p1.xi, p2.xi)
    a, b, c = (float(v) for v in s.coefficients(0.3))
    assert np.array_equal(p1.z, a * pair.z0 + b * pair.z1 + c * p1.xi)


def test_sample_point_degenerate_mode_is_linear_interpolation():
    s = make_builtin("bridge", {"sigma_min": 0.0, "sigma": 0.0}, deterministic=True)
    pair = ConditionPair(np.array([1.0, 2.0]), np.array([3.0, -2.0]))
    for t in (0.0, 0.2, 0.9, 1.0):
        pt = sample_point(s, pair, t, np.random.default_rng(0))
        assert np.array_equal(pt.z, (1 - t) * pair.z0 + t * pair.z1)


def test_sample_point_monte_carlo_moments():
    s = make_builtin("bridge", PARAMS["bridge"])
    n = 100_000
    pair = ConditionPair(np.full((n, 2), [0.0, 1.0]), np.full((n, 2), [2.0, -1.0]))
    pt = sample_point(s, pair, np.full(n, 0.5), np.random.default_rng(3))
    c = float(s.c(0.5))
    assert np.all(np.abs(pt.z.mean(axis=0) - [1.0, 0.0]) < 4 * c / math.sqrt(n))
    assert np.all(np.abs(pt.z.var(axis=0) / c ** 2 - 1) < 0.05)


# -- vector field and targets -------------------------------------------------------

def test_bridge_vf_midpoint_is_increment():
    s = make_builtin("bridge", PARAMS["bridge"])
    pair = ConditionPair(np.array([0.2, -0.4]), np.array([1.0, 0.6]))
    for z in (np.zeros(2), np.array([5.0, -3.0])):
        assert conditional_vf(s, pair, 0.5, z) == pytest.approx(pair.z1 - pair.z0, abs=1e-15)


def test_ot_vf_at_mean_is_target():
    s = make_builtin("ot", {"eps_min": 0.0})
    pair = ConditionPair(np.array([9.0, 9.0]), np.array([1.0, -2.0]))
    for t in (0.1, 0.5, 0.9):
        assert conditional_vf(s, pair, t, t * pair.z1) == pytest.approx(pair.z1, abs=1e-14)


def test_bridge_vf_plugin_oracle():
    # 1 + (sigma^2/2)(1 - 2t)/(sigma_min^2 + sigma^2 t(1-t)) * (z - mean)
    s = make_builtin("bridge", {"sigma_min": 0.1, "sigma": 0.2})
    u = conditional_vf(s, ConditionPair(np.array([0.0]), np.array([1.0])), 0.25, np.array([0.3]))
    expected = 1 + (0.04 / 2) * 0.5 / (0.01 + 0.04 * 0.1875) * 0.05
    assert float(u[0]) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("name", BUILTIN_PATHS)
def test_vf_matches_symbolic_oracle(name):
    s = make_builtin(name, PARAMS[name])
    rng = np.random.default_rng(1)
    for t in interior_times(s, 7):
        z0, z1, z = rng.standard_normal((3, 3))
        got = conditional_vf(s, ConditionPair(z0, z1), t, z)
        want = gaussian_vf(name, PARAMS[name], float(t), z0, z1, z)
        assert got == pytest.approx(want, rel=1e-10, abs=1e-12)


def test_vf_singular_schedule_raises():
    s = make_builtin("bridge", {"sigma_min": 0.0, "sigma": 0.5})
    with pytest.raises(SingularScheduleError):
        conditional_vf(s, ConditionPair(np.zeros(1), np.ones(1)), 0.0, np.zeros(1))


@settings(max_examples=50, deadline=None)
@given(
    name=st.sampled_from(BUILTIN_PATHS),
    t=st.floats(0.05, 0.95),
    seed=st.integers(0, 2 ** 32 - 1),
)
def test_vf_is_affine_in_z(name, t, seed):
    s = make_builtin(name, PARAMS[name])
    rng = np.random.default_rng(seed)
    z0, z1, z, w = rng.standard_normal((4, 4))
    pair = ConditionPair(z0, z1)
    lhs = conditional_vf(s, pair, t, z) - conditional_vf(s, pair, t, w)
    rhs = float(s.dc(t) / s.c(t)) * (z - w)
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-11)


def test_noise_target_is_stored_draw_and_score_is_its_rescale():
    s = make_builtin("bridge", PARAMS["bridge"])
    rng = np.random.default_rng(5)
    for _ in range(100):
        pair = ConditionPair(rng.standard_normal(3), rng.standard_normal(3))
        pt = sample_point(s, pair, rng.uniform(), rng)
        noise = regression_target(s, pair, pt, "noise")
        score = regression_target(s, pair, pt, "score")
        assert np.array_equal(noise, pt.xi)
        assert np.allclose(-float(s.c(pt.t)) * score, noise, rtol=1e-12, atol=1e-14)


def test_score_target_zero_at_mean():
    s = make_builtin("vp", PARAMS["vp"])
    pair = ConditionPair(np.array([1.0, -1.0]), np.array([0.0, 0.0]))
    mean, _ = path_moments(s, pair, 0.4)
    pt = PathPoint(np.float64(0.4), mean, np.zeros(2))
    assert regression_target(s, pair, pt, "score") == pytest.approx([0.0, 0.0], abs=1e-15)


def test_flow_target_is_vf_and_unknown_kind_rejected():
    s = make_builtin("ot", PARAMS["ot"])
    pair = ConditionPair(np.array([0.1]), np.array([0.7]))
    pt = sample_point(s, pair, 0.6, np.random.default_rng(2))
    assert np.array_equal(regression_target(s, pair, pt, "flow"), conditional_vf(s, pair, pt.t, pt.z))
    with pytest.raises(ValueError):
        regression_target(s, pair, pt, "ddpm")


def test_score_target_rejects_zero_noise():
    s = make_builtin("bridge", {"sigma_min": 0.0, "sigma": 0.0}, deterministic=True)
    pair = ConditionPair(np.zeros(1), np.ones(1))
    pt = sample_point(s, pair, 0.5, np.random.default_rng(0))
    with pytest.raises(SingularScheduleError):
        regression_target(s, pair, pt, "score")


@pytest.mark.parametrize("name", ["ve", "vp"])
def test_noise_adapted_grid_endpoints_and_monotone(name):
    s = make_builtin(name, PARAMS[name])
    g = noise_adapted_grid(s, s.t_max, 200)
    assert g[0] == 0.0 and g[-1] == pytest.approx(s.t_max)
    assert np.all(np.diff(g) > 0)
