import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rgmwm import (InvalidInputError, ModelSpec, NoSolutionError, NumericalFailureError,
                   RobustScore, WaveletVariance, consistency_constant, estimate_V,
                   estimate_wv, fit, modwt_haar, simulate, theoretical_wv_1d, tukey_weight,
                   tuning_for_efficiency, wv_classical, wv_confidence_intervals, wv_robust)
from rgmwm.wv import (CALIBRATED_EFFICIENCIES, DegenerateScaleWarning, WvEstimate,
                      _estimating_fn, asymptotic_efficiency)

AR1 = ModelSpec.parse("ar1(rho=0.9, v2=1)")


def mc_efficiency(c, n=10 ** 6, seed=0):
    """Monte Carlo Gaussian efficiency of the Tukey WV score at ``c``."""
    z = np.random.default_rng(seed).standard_normal(n)
    s = z * z
    q = np.clip(1 - s / c ** 2, 0, None)
    chi = s * q ** 4
    z_dchi = 2 * s * (q ** 4 - 4 * (s / c ** 2) * q ** 3)
    return np.mean(z_dchi) ** 2 / (2 * np.var(chi))


# ---------------------------------------------------------------- classical
def test_classical_mean_of_squares():
    assert wv_classical([1, -1, 2]) == 2.0


def test_classical_all_zero_warns():
    with pytest.warns(DegenerateScaleWarning):
        assert wv_classical(np.zeros(5)) == 0.0


def test_classical_empty_rejected():
    with pytest.raises(InvalidInputError):
        wv_classical([])


def test_classical_white_noise_closed_form():
    x = np.random.default_rng(3).standard_normal(10 ** 5)
    coeffs = modwt_haar(x, 8)
    for j in coeffs.scales:
        w2 = coeffs[j] ** 2
        # coefficients are dependent within 2**j lags: batch-means standard error
        batches = w2[: w2.size // 100 * 100].reshape(100, -1).mean(axis=1)
        se = batches.std(ddof=1) / 10
        assert abs(wv_classical(coeffs[j]) - 2.0 ** -j) < 3 * se


# -------------------------------------------------------------- Tukey weight
def test_tukey_weight_examples():
    assert tukey_weight(0.0, 3.0) == 1.0
    assert tukey_weight(3.0, 3.0) == 0.0
    assert tukey_weight(-5.0, 3.0) == 0.0
    for c in (0.1, 1.0, 4.4, 1e3):
        assert tukey_weight(c / 2, c) == pytest.approx(0.5625, rel=1e-14)


@pytest.mark.property
@given(x=st.floats(-1e6, 1e6), c=st.floats(1e-3, 1e3))
def test_tukey_weight_range(x, c):
    w = tukey_weight(x, c)
    assert 0.0 <= w <= 1.0


# ------------------------------------------------------- consistency constant
def test_consistency_constant_limits():
    assert consistency_constant(1e4) == pytest.approx(1.0, rel=1e-6)
    assert consistency_constant(1e-3) < 1e-8
    assert consistency_constant(math.inf) == 1.0
    with pytest.raises(InvalidInputError):
        consistency_constant(0.0)


@pytest.mark.parametrize("c", [1.0, 2.2, 5.0])
def test_consistency_constant_matches_monte_carlo(c):
    rng = np.random.default_rng(11)
    total = 0.0
    for _ in range(10):
        z = rng.standard_normal(10 ** 6)
        total += np.sum(z * z * tukey_weight(z, c) ** 2)
    mc = total / 10 ** 7
    b = consistency_constant(c)
    assert float(f"{b:.3g}") == float(f"{mc:.3g}") or abs(b - mc) / b < 5e-4


@pytest.mark.property
def test_consistency_constant_is_increasing():
    cs = np.linspace(0.5, 10, 40)
    bs = [consistency_constant(c) for c in cs]
    assert np.all(np.diff(bs) > 0)


# --------------------------------------------------------------- calibration
def test_efficiency_one_is_classical():
    score = tuning_for_efficiency(1.0)
    assert math.isinf(score.c) and score.is_classical


def test_efficiency_06_self_consistent():
    score = tuning_for_efficiency(0.6)
    assert score.c > 0
    assert mc_efficiency(score.c) == pytest.approx(0.6, abs=0.02)
    assert asymptotic_efficiency(score.c) == pytest.approx(0.6, abs=1e-8)
    assert score.b_c == pytest.approx(consistency_constant(score.c), rel=1e-12)


@pytest.mark.property
def test_efficiency_monotone():
    cs = [tuning_for_efficiency(e).c for e in CALIBRATED_EFFICIENCIES]
    assert all(a < b for a, b in zip(cs, cs[1:]))
    assert tuning_for_efficiency(0.9).c > tuning_for_efficiency(0.6).c


@pytest.mark.parametrize("eff", [0.0, 0.05, -0.3, 1.01, 2.0])
def test_unattainable_efficiency(eff):
    with pytest.raises(InvalidInputError):
        tuning_for_efficiency(eff)


# ---------------------------------------------------------------- robust WV
def test_robust_large_c_equals_classical(rng):
    w = rng.standard_normal(500) * 3
    score = RobustScore.from_c(1e6)
    assert wv_robust(w, score) == pytest.approx(wv_classical(w), rel=1e-6)


def test_robust_fisher_consistent():
    w = np.random.default_rng(4).standard_normal(10 ** 5)
    est = wv_robust(w, 0.6)
    # asymptotic standard error of the M-estimator of a unit variance
    se = math.sqrt(2.0 / 0.6 / w.size)
    assert abs(est - 1.0) < 3 * se


def test_robust_resists_one_percent_outliers():
    rng = np.random.default_rng(8)
    w = rng.standard_normal(10 ** 4)
    idx = rng.choice(w.size, 100, replace=False)
    w[idx] = rng.choice([-100.0, 100.0], idx.size)
    assert wv_robust(w, 0.6) == pytest.approx(1.0, rel=0.05)
    assert wv_classical(w) == pytest.approx(100.0, rel=0.05)


def test_breakdown_single_huge_coefficient(rng):
    w = rng.standard_normal(1000)
    clean = wv_robust(w, 0.6)
    w[17] = 1e6
    assert wv_robust(w, 0.6) == pytest.approx(clean, rel=0.10)
    assert wv_classical(w) > 1e6


def test_estimating_function_negative_at_upper_bracket():
    score = tuning_for_efficiency(0.6)
    for seed in range(20):
        w = np.random.default_rng(seed).standard_normal(300)
        F = _estimating_fn(w * w, score)
        assert F(math.log(np.mean(w * w) * 1e6)) < 0
        assert F(math.log(np.mean(w * w) * 1e-6)) < 0


def test_no_root_raises():
    # most coefficients zero: the estimating equation stays below zero
    w = np.r_[np.ones(10), np.zeros(90)]
    with pytest.raises(NoSolutionError):
        wv_robust(w, 0.6)


def test_root_found_below_classical_window():
    # 5 huge values move the classical estimate far above the bulk
    w = np.random.default_rng(1).standard_normal(1000)
    w[:5] = 1e8
    assert wv_classical(w) > 1e12
    assert wv_robust(w, 0.6) == pytest.approx(1.0, rel=0.15)


def test_robust_input_errors():
    with pytest.raises(InvalidInputError):
        wv_robust(np.zeros(10), 0.6)
    with pytest.raises(InvalidInputError):
        wv_robust([1.0], 0.6)


@pytest.mark.property
@given(seed=st.integers(0, 10 ** 6), a=st.floats(1e-3, 1e3), n=st.integers(20, 400))
def test_scale_equivariance(seed, a, n):
    w = np.random.default_rng(seed).standard_normal(n)
    assert wv_classical(a * w) == pytest.approx(a * a * wv_classical(w), rel=1e-10)
    assert wv_robust(a * w, 0.6) == pytest.approx(a * a * wv_robust(w, 0.6), rel=1e-6)


@pytest.mark.property
@given(w=arrays(np.float64, st.integers(2, 200), elements=st.floats(-1e4, 1e4)),
       c=st.sampled_from([1e6, 1e7, 1e9]))
def test_robust_to_classical_limit(w, c):
    cl = wv_classical(w)
    if cl == 0.0:
        return
    assert abs(wv_robust(w, RobustScore.from_c(c)) - cl) / cl <= 1e-6


# ---------------------------------------------------------------- covariance
def test_plugin_variance_matches_simulation():
    n, reps = 1000, 2000
    rng = np.random.default_rng(21)
    nus, vs = [], []
    for _ in range(reps):
        coeffs = modwt_haar(rng.standard_normal(n), 9)
        nu = wv_classical(coeffs[1])
        nus.append(nu)
        vs.append(estimate_V(coeffs, score=None)[0, 0])
    empirical = np.var(nus, ddof=1)
    # MA(1) coefficients with lag-one correlation -1/2: squared-coefficient correlation 1/4
    m1 = n - 1
    closed = 2 * 0.5 ** 2 * (1 + 2 * 0.25) / m1
    assert empirical == pytest.approx(closed, rel=0.15)
    assert np.mean(vs) == pytest.approx(empirical, rel=0.15)


@pytest.mark.property
@given(seed=st.integers(0, 10 ** 6), n=st.integers(16, 600), robust=st.booleans())
def test_plugin_symmetric_psd(seed, n, robust):
    x = np.cumsum(np.random.default_rng(seed).standard_normal(n)) * 0.1
    x += np.random.default_rng(seed + 1).standard_normal(n)
    coeffs = modwt_haar(x)
    try:
        V = estimate_V(coeffs, score=0.6 if robust else None)
    except NoSolutionError:
        return
    np.testing.assert_array_equal(V, V.T)
    assert np.linalg.eigvalsh(V).min() >= -1e-12 * np.abs(V).max()
    assert V.shape == (coeffs.J, coeffs.J)


def test_plugin_2d_shape_and_psd():
    f = np.random.default_rng(0).standard_normal((20, 20))
    est = estimate_wv(f, 0.6)
    assert est.V_hat.shape == (10, 10)
    assert np.linalg.eigvalsh(est.V_hat).min() >= -1e-14


def test_bootstrap_with_two_replicates_rejected():
    x = simulate(AR1, 500, 1)
    coeffs = modwt_haar(x)
    with pytest.raises(NumericalFailureError):
        estimate_V(coeffs, score=None, method="bootstrap", model=AR1, B=2, seed=0)


def test_bootstrap_needs_model_and_known_method():
    coeffs = modwt_haar(simulate(AR1, 200, 1))
    with pytest.raises(InvalidInputError):
        estimate_V(coeffs, method="bootstrap")
    with pytest.raises(InvalidInputError):
        estimate_V(coeffs, method="jackknife")


@pytest.mark.property
def test_bootstrap_deterministic():
    coeffs = modwt_haar(simulate(AR1, 300, 1))
    a = estimate_V(coeffs, None, 0.6, "bootstrap", AR1, B=60, seed=5)
    b = estimate_V(coeffs, None, 0.6, "bootstrap", AR1, B=60, seed=5)
    np.testing.assert_array_equal(a, b)


# ------------------------------------------------------------------ intervals
def test_zero_variance_interval_is_degenerate():
    est = WvEstimate([1, 2], np.array([0.5, 0.25]), [10, 9], V_hat=np.zeros((2, 2)))
    ci = wv_confidence_intervals(est, 0.95)
    np.testing.assert_array_equal(ci, [[0.5, 0.5], [0.25, 0.25]])


@pytest.mark.property
def test_interval_widening_and_floor():
    x = simulate(AR1, 1000, 2)
    est = estimate_wv(x, 0.6)
    wide = wv_confidence_intervals(est, 0.99)
    narrow = wv_confidence_intervals(est, 0.90)
    assert np.all(wide[:, 0] <= narrow[:, 0]) and np.all(wide[:, 1] > narrow[:, 1])
    assert np.all(wide[:, 0] < narrow[:, 0]) or np.all(wide[:, 0] >= est.nu_hat * 1e-6)
    assert np.all(wide[:, 0] >= est.nu_hat * 1e-6)


def test_interval_errors():
    est = WvEstimate([1], np.array([1.0]), [5])
    with pytest.raises(InvalidInputError):
        wv_confidence_intervals(est)
    est.V_hat = np.eye(1)
    with pytest.raises(InvalidInputError):
        wv_confidence_intervals(est, 1.0)


def _coverage(ci, truth):
    return np.mean((ci[:, :, 0] <= truth) & (truth <= ci[:, :, 1]), axis=0)


@pytest.mark.xfail(strict=True, reason=(
    "plug-in HAC with the pinned bandwidth floor(N_J^(1/3)) underestimates the "
    "variance of coarse-scale WV at N=1000; see the decisions ledger"))
def test_plugin_interval_coverage_ar1():
    truth = theoretical_wv_1d(AR1, 9).nu_theta
    cis = []
    for seed in range(500):
        cis.append(estimate_wv(simulate(AR1, 1000, seed), None).ci)
    cover = _coverage(np.array(cis), truth)
    assert np.all((cover >= 0.90) & (cover <= 0.98)), cover


@pytest.mark.xfail(strict=True, reason=(
    "bootstrap covariance at the fitted model tracks the fitted coarse-scale WV, "
    "so intervals undercover at scales 5-9 for N=1000; see the decisions ledger"))
def test_bootstrap_interval_coverage_ar1():
    truth = theoretical_wv_1d(AR1, 9).nu_theta
    cis = []
    for seed in range(500):
        x = simulate(AR1, 1000, seed)
        fitted = fit(x, "ar1(rho=?, v2=?)", robust=False, covariance=None,
                     weights=False).model.fixed()
        cis.append(estimate_wv(x, None, covariance="bootstrap", model=fitted,
                               B=100, seed=seed).ci)
    cover = _coverage(np.array(cis), truth)
    assert np.all((cover >= 0.90) & (cover <= 0.98)), cover


def test_interval_coverage_with_reference_covariance():
    # the interval construction itself is calibrated when V is accurate
    truth = theoretical_wv_1d(AR1, 9).nu_theta
    reference = np.array([estimate_wv(simulate(AR1, 1000, 10 ** 5 + s), None,
                                      covariance=None).nu_hat for s in range(2000)])
    V = np.diag(np.var(reference, axis=0, ddof=1))
    cis = []
    for seed in range(500):
        est = estimate_wv(simulate(AR1, 1000, seed), None, covariance=None)
        est.V_hat = V
        cis.append(wv_confidence_intervals(est, 0.95))
    cover = _coverage(np.array(cis), truth)
    assert np.all((cover >= 0.90) & (cover <= 0.98)), cover


# ------------------------------------------------------------------ estimator
def test_wavelet_variance_estimator():
    x = simulate(AR1, 512, 3)
    wv = WaveletVariance(robust=False).fit(x)
    assert wv.scales_ == list(range(1, 9))
    np.testing.assert_allclose(wv.transform(x)[0], wv.nu_)
    rob = WaveletVariance().fit(x)
    assert rob.estimate_.score.efficiency == pytest.approx(0.6)
    assert rob.estimate_.ci.shape == (8, 2)
    assert WaveletVariance(J=3).get_params()["J"] == 3
    f = np.random.default_rng(0).standard_normal((20, 20))
    assert WaveletVariance(covariance=None).fit_transform(f).shape == (1, 10)
    # a 16 x 16 field leaves a single coefficient at pair (4, 4)
    with pytest.raises(InvalidInputError):
        WaveletVariance().fit(f[:16, :16])
    assert WaveletVariance(robust=False).fit_transform(f[:16, :16]).shape == (1, 10)


def test_estimate_wv_degenerate_flag():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateScaleWarning)
        est = estimate_wv(np.ones(16), None)
    assert est.degenerate == [1, 2, 3] and est.V_hat is None
