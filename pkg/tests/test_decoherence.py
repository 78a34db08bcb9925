import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csfq.decoherence import (TWO_I, PowerLawPSD, RateSet, coherence_approx, coherence_exponent,
                              coherence_numeric, decay_time, filter_function, filter_function_direct,
                              filter_moments, fit_decay, fit_powerlaw_psd, gamma_n)
from csfq.errors import Degenerate, IllConditioned

SENS = 7.29e11  # d omega01 / d flux at 0.501 flux quanta (rad/s per flux quantum)
DEVICE_A = 1.8e-14 * SENS**2
CPMG_SET = np.array([1, 5, 10, 20, 40, 100])


@pytest.fixture(scope="module")
def psd():
    return PowerLawPSD(DEVICE_A, 0.68)


def test_psd_validation():
    with pytest.raises(ValueError):
        PowerLawPSD(-1.0, 0.5)
    with pytest.raises(ValueError):
        PowerLawPSD(1.0, 2.5)
    with pytest.raises(ValueError):
        PowerLawPSD(1.0, 0.5, omega_min=10.0, omega_max=1.0)
    p = PowerLawPSD(2.0, 1.0, 1.0, 10.0)
    assert p(0.5) == 0 and p(20.0) == 0 and p(2.0) == pytest.approx(1.0)
    assert p.scaled(3.0).a == pytest.approx(18.0)


@settings(max_examples=40, deadline=None)
@given(n=st.sampled_from([1, 2, 3, 5, 10]), x=st.floats(1e-3, 400.0))
def test_filter_closed_form_equals_time_integral(n, x):
    assert filter_function(x, n) == pytest.approx(filter_function_direct(x, n)[0], rel=1e-6, abs=1e-14)


def test_filter_removable_points():
    for n in (1, 2, 3, 7):
        assert filter_function(0.0, n) == 0.0
        assert filter_function(1e-6, n) < 1e-12  # vanishes at least as X^2
        # zeros of cos(x / 2n) in the closed-form denominator
        x = n * np.pi
        assert filter_function(x, n) == pytest.approx(filter_function_direct(x, n)[0], rel=1e-9)
    # N = 1 at X = 2 pi: tau^2 (8 / X^2) sin^4(X/4)
    assert filter_function(2 * np.pi, 1, tau=2.0) == pytest.approx(4.0 * 8 / (2 * np.pi) ** 2)


def test_filter_scales_with_tau_squared():
    x = np.linspace(0.1, 50, 30)
    np.testing.assert_allclose(filter_function(x, 4, tau=3e-6), 9e-12 * filter_function(x, 4))


def test_filter_total_weight_matches_parseval():
    # int_0^inf f dX = pi / 2 for any pulse number (the toggling sign has unit square)
    for n in (1, 3, 6):
        big = 400 * np.pi * n
        xs = np.linspace(0, big, 2_000_001)
        total = np.trapezoid(filter_function(xs, n), xs) + (2 * n + 1) / big
        assert total == pytest.approx(np.pi / 2, rel=1e-7)


@pytest.mark.parametrize("n", [5, 10])
def test_filter_peak_near_n_pi(n):
    x = np.linspace(0.2 * n * np.pi, 2 * n * np.pi, 20001)
    peak = x[np.argmax(filter_function(x, n))]
    assert peak == pytest.approx(n * np.pi, rel=0.15)


def test_single_pulse_filter_peak():
    # 8 sin^4(X/4) / X^2 peaks where tan(X/4) = X/2, i.e. near 1.48 pi rather than pi
    from scipy.optimize import brentq

    root = brentq(lambda x: np.tan(x / 4) - x / 2, 3.5, 6.0)
    x = np.linspace(3.0, 7.0, 400001)
    assert x[np.argmax(filter_function(x, 1))] == pytest.approx(root, abs=2e-5)


@pytest.mark.parametrize("n, i_val, ratio", [(10, 1.24190, 1.019422), (50, 1.24109, 1.00076), (100, 1.24109, 1.00019),
                                             (150, 1.24109, 1.000084)])
def test_filter_moments(n, i_val, ratio):
    i, xs = filter_moments(n)
    assert i == pytest.approx(1.24, abs=0.02)
    assert xs / (n * np.pi) == pytest.approx(1.0, rel=0.02)
    assert i == pytest.approx(i_val, abs=1e-5)
    assert xs / (n * np.pi) == pytest.approx(ratio, abs=1e-6)


def test_filter_moments_independent_of_tau():
    assert filter_moments(10, 1.0) == filter_moments(10, 7e-6)


def test_coherence_trivial_limits(psd):
    assert coherence_numeric(psd, 5, 0.0) == 1.0
    assert coherence_numeric(PowerLawPSD(0.0, 0.68), 5, 1e-5) == 1.0
    assert coherence_approx(PowerLawPSD(0.0, 0.68), 5, 1e-5) == 1.0
    assert coherence_numeric(psd, 5, 1e-9) == pytest.approx(1.0, abs=1e-6)


def test_white_noise_exponent_is_parseval_limit():
    # alpha = 0: 2 int_0^inf a F dw = 2 a tau pi / 2
    w = PowerLawPSD(1e6, 0.0, omega_min=1e-3, omega_max=1e13)
    for n in (1, 4):
        assert coherence_exponent(w, n, 1e-6) == pytest.approx(np.pi, rel=1e-5)


def test_numeric_and_peak_approximation_agree(psd):
    # the peak approximation drops the filter's higher harmonics, which add
    # 6-12 % to the exponent on this grid; in coherence this stays below 0.05
    for n in (5, 10, 40):
        for tau in (2e-6, 5e-6, 10e-6):
            cn, ca = coherence_numeric(psd, n, tau), coherence_approx(psd, n, tau)
            assert abs(cn - ca) < 0.05
            ratio = np.log(cn) / np.log(ca)
            assert 1.0 < ratio < 1.15


def test_device_decay_times():
    t1, t100 = decay_time(DEVICE_A, 0.68, 1), decay_time(DEVICE_A, 0.68, 100)
    assert t1 == pytest.approx(1.4e-6, rel=0.35)
    assert t100 == pytest.approx(6.8e-6, rel=0.35)
    assert t1 == pytest.approx(1.0605e-6, rel=1e-3)
    assert t100 / t1 == pytest.approx(100 ** (0.68 / 1.68), rel=1e-12)


def test_approx_decay_is_stretched(psd):
    taus = np.array([1e-6, 2e-6, 4e-6])
    expo = -np.log(coherence_approx(psd, 10, taus))
    slope = np.polyfit(np.log(taus), np.log(expo), 1)[0]
    assert slope == pytest.approx(1.68, rel=1e-9)


def test_gamma_n_closed_form_relations():
    assert gamma_n(1e10, 0.68, 1) / gamma_n(1e10, 0.68, 100) == pytest.approx(100 ** (0.68 / 1.68))
    assert gamma_n(1e10, 0.0, 1) == pytest.approx(gamma_n(1e10, 0.0, 77))
    assert gamma_n(2 ** 1.68 * 1e10, 0.68, 5) == pytest.approx(2 * gamma_n(1e10, 0.68, 5))
    # approx coherence at tau = 1 / Gamma_N is 1/e by construction of the closed form
    p = PowerLawPSD(1e10, 0.68)
    i, xs = filter_moments(20)
    t = 1 / gamma_n(1e10, 0.68, 20)
    expected = np.exp(-(2 * i / TWO_I) * (20 * np.pi / xs) ** 0.68)
    assert coherence_approx(p, 20, t) == pytest.approx(expected)
    with pytest.raises(ValueError):
        gamma_n(0.0, 0.5, 1)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(1e6, 1e12), alpha=st.floats(0.05, 1.5))
def test_psd_fit_round_trip(a, alpha):
    rates = RateSet(CPMG_SET, gamma_n(a, alpha, CPMG_SET))
    a_fit, alpha_fit = fit_powerlaw_psd(rates)
    assert a_fit == pytest.approx(a, rel=1e-6)
    assert alpha_fit == pytest.approx(alpha, abs=1e-6)


def test_psd_fit_two_points_exact():
    rates = RateSet([1, 100], gamma_n(DEVICE_A, 0.68, np.array([1, 100])))
    assert fit_powerlaw_psd(rates)[1] == pytest.approx(0.68, abs=1e-9)


def test_psd_fit_degenerate():
    with pytest.raises(Degenerate):
        fit_powerlaw_psd(RateSet([5, 5, 5], [1e5, 1.1e5, 0.9e5]))


def test_psd_fit_scatter_matches_error_propagation():
    # 20 % multiplicative rate noise on the measured pulse-number set; the log-log
    # slope error propagates to sigma_alpha = (1 + alpha)^2 sigma / sqrt(Sxx), about
    # 0.15, so +-0.15 is a one-sigma band rather than a bound on every seed
    g = gamma_n(DEVICE_A, 0.68, CPMG_SET)
    x = np.log(np.pi * CPMG_SET)
    sigma = (1.68**2) * 0.2 / np.sqrt(np.sum((x - x.mean()) ** 2))
    errs = []
    for seed in range(400):
        rng = np.random.default_rng(seed)
        noisy = g * np.exp(0.2 * rng.standard_normal(g.size))
        errs.append(fit_powerlaw_psd(RateSet(CPMG_SET, noisy))[1] - 0.68)
    errs = np.array(errs)
    assert np.std(errs) == pytest.approx(sigma, rel=0.2)
    assert abs(np.median(errs)) < 0.03
    assert np.mean(np.abs(errs) <= 0.15) > 0.6


@settings(max_examples=10, deadline=None)
@given(alpha=st.floats(0.2, 1.2), n=st.integers(1, 20))
def test_coherence_monotone_in_tau(alpha, n):
    p = PowerLawPSD(1e10, alpha)
    c = coherence_numeric(p, n, np.array([0.5e-6, 1e-6, 2e-6, 4e-6]))
    assert np.all(np.diff(c) <= 1e-12)


@settings(max_examples=10, deadline=None)
@given(alpha=st.floats(0.2, 1.2), tau=st.floats(1e-6, 8e-6))
def test_more_pulses_help(alpha, tau):
    p = PowerLawPSD(1e10, alpha)
    c = [coherence_numeric(p, n, tau) for n in (1, 4, 16)]
    assert c[0] <= c[1] <= c[2]


def test_fit_decay_round_trips():
    t = np.linspace(0, 20e-6, 60)
    r = fit_decay(t, 0.9 * np.exp(-t / 4.7e-6) + 0.05, "exponential")
    assert r.rate == pytest.approx(1 / 4.7e-6, rel=0.01)
    assert r.goodness > 0.999
    r = fit_decay(t, 0.9 * np.exp(-((t / 9.4e-6) ** 2)) + 0.05, "gaussian")
    assert r.rate == pytest.approx(1 / 9.4e-6, rel=0.01)
    r = fit_decay(t, np.exp(-((t / 6e-6) ** 1.68)), "stretched", alpha=0.68)
    assert r.rate == pytest.approx(1 / 6e-6, rel=0.01)
    t1 = 47.1e-6
    r = fit_decay(t, np.exp(-((t / 9.4e-6) ** 2)) * np.exp(-t / (2 * t1)), "exponential_with_t1", t1=t1)
    assert r.rate == pytest.approx(1 / 9.4e-6, rel=0.01)


def test_fit_decay_errors():
    t = np.linspace(0, 1e-5, 20)
    with pytest.raises(IllConditioned):
        fit_decay(t, np.ones_like(t))
    with pytest.raises(ValueError):
        fit_decay(t[:3], t[:3])
    with pytest.raises(ValueError):
        fit_decay(t, np.exp(-t / 1e-6), "stretched")
    with pytest.raises(ValueError):
        fit_decay(t, np.exp(-t / 1e-6), "exponential_with_t1")
