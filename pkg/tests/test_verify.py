import json
import math

import numpy as np
import pytest

from sketchfed import ConfigError, verify
from sketchfed.problems import SpectrumSpec, make_mlp, make_quadratic


# --- concentration ------------------------------------------------------------

def test_identity_deviations_are_zero():
    devs = verify.product_deviations("identity", 32, 32, 50, seed=1)
    assert np.all(devs == 0.0)


@pytest.mark.parametrize("kind", ["gaussian", "srht", "countsketch"])
def test_deviations_are_homogeneous(kind):
    g, h = verify.fixed_unit_pair(64, seed=2)
    base = verify.product_deviations(kind, 64, 8, 30, 3, g, h)
    # power-of-two scalings are exact in binary floating point
    np.testing.assert_array_equal(verify.product_deviations(kind, 64, 8, 30, 3, 4.0 * g, h), 4.0 * base)
    np.testing.assert_array_equal(verify.product_deviations(kind, 64, 8, 30, 3, g, 0.5 * h), 0.5 * base)
    np.testing.assert_allclose(verify.product_deviations(kind, 64, 8, 30, 3, 3.0 * g, h), 3.0 * base, rtol=1e-12, atol=1e-15)


def test_fixed_unit_pair():
    g, h = verify.fixed_unit_pair(100, seed=0)
    assert math.isclose(np.linalg.norm(g), 1.0) and math.isclose(np.linalg.norm(h), 1.0)
    assert abs(np.dot(g, h)) < 1e-14
    g2, h2 = verify.fixed_unit_pair(100, seed=0, orthogonal=False)
    assert abs(np.dot(g2, h2)) > 1e-6


def test_envelope_forms():
    assert verify.envelope("gaussian", 1024, 64, 0.01) == pytest.approx(math.log(102400) ** 1.5 / 8)
    assert verify.envelope("countsketch", 1024, 64, 0.01) == pytest.approx(math.log(100))
    assert verify.envelope("countsketch", 1024, 16, 0.01) == verify.envelope("countsketch", 1024, 256, 0.01)


def test_concentration_requires_enough_trials():
    with pytest.raises(ValueError, match="too small"):
        verify.test_concentration("gaussian", 64, 8, 0.01, 999)


def test_concentration_report_and_json():
    rep = verify.test_concentration("srht", 128, 16, 0.05, 400, seed=0)
    assert rep.passed is None and rep.constant is None
    assert rep.quantile_lo <= rep.quantile <= rep.quantile_hi
    rep2 = verify.test_concentration("srht", 128, 16, 0.05, 400, seed=0, constant=rep.quantile / rep.envelope)
    assert rep2.passed
    doc = json.loads(json.dumps(rep2.to_dict()))
    assert doc["kind"] == "srht" and doc["trials"] == 400


def test_identity_suite_passes_trivially():
    reps = verify.concentration_suite("identity", 32, (32,), 0.1, 100)
    assert all(r.passed and r.quantile == 0.0 for r in reps)


def test_small_suite_scales_like_inverse_sqrt_b():
    reps = verify.concentration_suite("srht", 256, (8, 32), 0.05, 2000, seed=4)
    assert all(r.passed for r in reps)
    assert 1.6 < reps[0].quantile / reps[1].quantile < 2.5


def test_quantile_bounds_bracket_estimate():
    x = np.random.default_rng(0).standard_normal(10_000)
    q, lo, hi = verify.quantile_bounds(x, 0.99)
    assert lo < q < hi
    assert lo < 2.326 < hi


def test_trials_are_thread_count_invariant(monkeypatch):
    monkeypatch.setenv("SKETCHFED_THREADS", "1")
    a = verify.product_deviations("countsketch", 64, 8, 5000, seed=5)
    monkeypatch.setenv("SKETCHFED_THREADS", "4")
    b = verify.product_deviations("countsketch", 64, 8, 5000, seed=5)
    np.testing.assert_array_equal(a, b)


def test_bad_thread_env(monkeypatch):
    monkeypatch.setenv("SKETCHFED_THREADS", "many")
    with pytest.raises(ConfigError):
        verify.max_threads()


# --- unbiasedness ----------------------------------------------------------------------

def test_identity_unbiasedness_exact():
    rep = verify.test_unbiasedness("identity", 16, 16, 100)
    assert rep.passed and rep.max_abs_z == 0.0


@pytest.mark.parametrize("kind", ["gaussian", "srht", "countsketch"])
def test_unbiasedness_small(kind):
    rep = verify.test_unbiasedness(kind, 32, 8, 10_000, seed=1)
    assert rep.passed, rep.max_abs_z
    assert len(rep.z) == 32


def test_biased_estimator_is_detected():
    # desk(sk(v)) has mean v; comparing against 1.1 v must fail
    rep = verify.test_unbiasedness("srht", 16, 8, 10_000, seed=0, v=np.ones(16))
    assert rep.passed
    from sketchfed.sketch import make_operator, round_seed
    est = np.mean([make_operator("srht", 16, 8, round_seed(0, i)).desk(make_operator("srht", 16, 8, round_seed(0, i)).sk(np.ones(16)))
                   for i in range(10_000)], axis=0)
    assert np.max(np.abs(est - 1.1)) > 0.05


# --- spectrum ----------------------------------------------------------------------------------

def test_spectrum_fixture_123():
    p = make_quadratic(SpectrumSpec(np.array([1.0, 2.0, 3.0])), seed=7)
    for x in (None, np.array([5.0, -3.0, 0.1])):
        rep = verify.estimate_spectrum(p, x)
        assert abs(rep.L - 3) <= 1e-6 and abs(rep.D - 6) <= 1e-6
    a = verify.estimate_spectrum(p, method="analytic")
    assert (a.L, a.D) == (3.0, 6.0)


def test_spectrum_signed():
    p = make_quadratic(SpectrumSpec(np.array([-1.0, 2.0])), seed=0)
    rep = verify.estimate_spectrum(p)
    assert abs(rep.L - 2) <= 1e-6 and abs(rep.D - 3) <= 1e-6


def test_spectrum_mlp_finite_with_oracle():
    p = make_mlp((8, 16, 1), 64, seed=0)
    rep = verify.estimate_spectrum(p)
    assert math.isfinite(rep.L) and math.isfinite(rep.D) and rep.L <= rep.D
    assert rep.D / (p.d * rep.L) < 1
    # coarser step gives the same answer to finite-difference accuracy
    rep2 = verify.estimate_spectrum(p, h=1e-3)
    assert abs(rep.L - rep2.L) < 1e-4 * max(1.0, rep.L)


def test_spectrum_exact_mode_cap():
    p = make_quadratic(SpectrumSpec.power_law(600), rotate=False)
    with pytest.raises(ConfigError):
        verify.estimate_spectrum(p)
    assert verify.estimate_spectrum(p, method="analytic").L == 1.0


def test_spectrum_analytic_needs_spectrum():
    with pytest.raises(ValueError):
        verify.estimate_spectrum(make_mlp(seed=0), method="analytic")


# --- slopes ------------------------------------------------------------------------------------------

def running_mean_power(T, p):
    t = np.arange(1, T + 1, dtype=float)
    m = t ** p
    return t * m - np.concatenate([[0.0], t[:-1] * m[:-1]])


@pytest.mark.parametrize("p", [-0.5, -1.0, -0.25])
def test_slope_exact_on_running_mean_power_law(p):
    rep = verify.fit_rate_slope(running_mean_power(1000, p), (10, 1000))
    assert abs(rep.slope - p) <= 1e-6
    assert rep.band < 1e-6 and rep.n_points == 991


@pytest.mark.parametrize("p", [-0.5, -1.0])
def test_slope_exact_pointwise(p):
    g = np.arange(1, 501, dtype=float) ** p
    rep = verify.fit_rate_slope(g, statistic="pointwise")
    assert abs(rep.slope - p) <= 1e-9


def test_running_mean_of_inverse_t_decays_like_log_over_t():
    g = 1.0 / np.arange(1, 2001, dtype=float)
    rep = verify.fit_rate_slope(g, (500, 2000))
    assert -1.0 < rep.slope < -0.8


def test_slope_window_validation():
    g = np.ones(100)
    with pytest.raises(ValueError):
        verify.fit_rate_slope(g, (1, 5))
    with pytest.raises(ValueError):
        verify.fit_rate_slope(g, (50, 200))
    with pytest.raises(ValueError):
        verify.fit_rate_slope(g, (1, 100), statistic="median")


def test_slope_degenerate_flagged():
    rep = verify.fit_rate_slope(np.zeros(50))
    assert rep.degenerate and math.isnan(rep.slope)
    json.dumps(rep.to_dict())


def test_slope_accepts_run_result():
    from sketchfed.config import from_dict
    from sketchfed.fedsim import run_experiment
    res = run_experiment(from_dict({"problem": {"d": 32}, "sketch": {"b": 8}, "federation": {"rounds": 30},
                                    "noise": {"kind": "gaussian", "sigma": 0.01}, "optimizer": {"kappa": 0.05, "eps": 0.03}}))
    rep = verify.fit_rate_slope(res, (5, 30))
    assert rep.slope < 0
