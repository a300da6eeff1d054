import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from adaptheston import (BridgeSegment, HestonParams, RngStream, TimeMap, sample_bridge_midvalue,
                         sample_transition, t_of_tau, tau_of_t, v_of_x)
from adaptheston.oracles import rejection_bridge_midpoints
from adaptheston.validation import transition_moment_configs


def mean_ok(draws, ref, k=3.0):
    return abs(draws.mean() - ref) <= k * draws.std(ddof=1) / math.sqrt(draws.size)


def var_ok(draws, ref, k=3.0):
    c = draws - draws.mean()
    var = c.var(ddof=1)
    return abs(var - ref) <= k * math.sqrt((np.mean(c**4) - var**2) / draws.size)


def test_benchmark_dimension_and_order(params):
    assert params.dimension == pytest.approx(1.2684, abs=5e-5)
    assert params.order == pytest.approx(-0.3658, abs=5e-5)


@pytest.mark.parametrize("field,value", [("kappa", 0.0), ("theta", -1.0), ("sigma_v", 0.0),
                                         ("rho", 1.01), ("s0", 0.0), ("v0", -1e-9)])
def test_params_validation(params, field, value):
    kw = dict(kappa=params.kappa, theta=params.theta, sigma_v=params.sigma_v, rho=params.rho,
              s0=params.s0, v0=params.v0, r=params.r)
    kw[field] = value
    with pytest.raises(ValueError):
        HestonParams(**kw)


def test_tau_of_t_values(params):
    tm = params.time_map
    assert tau_of_t(tm, 0.0) == 0.0
    assert tau_of_t(tm, 1.0) == pytest.approx(0.3721 / 24.84 * math.expm1(6.21), rel=1e-14)
    assert tau_of_t(tm, 1.0) == pytest.approx(7.4405, abs=5e-5)


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0])
def test_time_round_trip(params, t):
    tm = params.time_map
    assert t_of_tau(tm, tau_of_t(tm, t)) == pytest.approx(t, rel=1e-12)


def test_v_of_x(params):
    tm = params.time_map
    assert v_of_x(tm, 0.0, 0.3) == 0.3
    assert v_of_x(tm, 1.0, 1.0) == pytest.approx(math.exp(-6.21), rel=1e-14)
    # the commonly quoted 2.0086e-3 is a loose rounding of 2.00924e-3
    assert v_of_x(tm, 1.0, 1.0) == pytest.approx(2.0086e-3, rel=1e-3)


def test_time_map_domain():
    with pytest.raises(ValueError):
        TimeMap(0.0, 1.0)
    tm = TimeMap(1.0, 1.0)
    for f in (tau_of_t, t_of_tau):
        with pytest.raises(ValueError):
            f(tm, -1.0)
    with pytest.raises(ValueError):
        v_of_x(tm, 1.0, -0.1)


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=0.0, max_value=5.0))
def test_tau_increasing_and_inverse(t):
    tm = HestonParams.benchmark().time_map
    assert tau_of_t(tm, t + 0.01) > tau_of_t(tm, t)
    assert t_of_tau(tm, tau_of_t(tm, t)) == pytest.approx(t, rel=1e-12, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=0.0, max_value=5.0), st.floats(min_value=0.0, max_value=1e6))
def test_v_of_x_nonnegative(t, x):
    assert v_of_x(HestonParams.benchmark().time_map, t, x) >= 0.0


@pytest.mark.parametrize("x,dtau", transition_moment_configs())
def test_transition_mean_and_variance(params, x, dtau):
    lam = params.dimension
    draws = sample_transition(RngStream(21, 1), params, x, dtau, size=10**6)
    assert mean_ok(draws, x + lam * dtau)
    assert var_ok(draws, 4 * x * dtau + 2 * lam * dtau * dtau)


@pytest.mark.parametrize("i", range(10))
def test_transition_identities_random_configs(params, i):
    rng = np.random.default_rng(100 + i)
    x, dtau = rng.uniform(0, 1), rng.uniform(0.01, 3)
    lam = params.dimension
    draws = sample_transition(RngStream(22, i), params, x, dtau, size=2 * 10**5)
    assert mean_ok(draws, x + lam * dtau)
    assert var_ok(draws, 4 * x * dtau + 2 * lam * dtau * dtau)


def test_transition_from_zero_is_gamma(params):
    draws = sample_transition(RngStream(23), params, 0.0, 0.4, size=10**5)
    law = stats.gamma(params.order + 1.0, scale=0.8)
    assert stats.kstest(draws, law.cdf).pvalue > 0.01


def test_transition_matches_noncentral_chisquare(params):
    x, dtau = 0.3, 0.2
    draws = sample_transition(RngStream(24), params, x, dtau, size=10**5)
    law = stats.ncx2(params.dimension, x / dtau, scale=dtau)
    assert stats.kstest(draws, law.cdf).pvalue > 0.01


def test_origin_is_approached_for_negative_order(params):
    x, dtau, eps = 0.001, 0.5, 1e-4
    draws = sample_transition(RngStream(25), params, x, dtau, size=10**5)
    assert np.mean(draws < eps) > 0.0


def test_markov_one_step_vs_two_steps(params):
    x, d = 0.05, 0.3
    one = sample_transition(RngStream(26, 0), params, x, 2 * d, size=10**5)
    s = RngStream(26, 1)
    mid = sample_transition(s, params, x, d, size=10**5)
    two = np.array([sample_transition(s, params, m, d) for m in mid[:20000]])
    assert stats.ks_2samp(one, two).pvalue > 0.01


def test_bridge_zero_endpoints_is_gamma(params):
    seg = BridgeSegment(0.0, 1.0, 0.0, 0.0)
    draws = sample_bridge_midvalue(RngStream(27), params, seg, 0.25, size=10**5)
    law = stats.gamma(params.order + 1.0, scale=2 * 0.25 * 0.75 / 1.0)
    assert stats.kstest(draws, law.cdf).pvalue > 0.01


def test_bridge_mean_against_rejection_oracle(params):
    x_l, x_r, tl, tr = 0.0102, 0.02, 1.0, 1.2
    tm = 0.5 * (tl + tr)
    ref, acc = rejection_bridge_midpoints(31, params, x_l, x_r, tl, tm, tr, 2.5e-4, 40000)
    assert acc > 0
    draws = sample_bridge_midvalue(RngStream(32), params, BridgeSegment(tl, tr, x_l, x_r), tm,
                                   size=10**5)
    se = math.hypot(ref.std(ddof=1) / math.sqrt(ref.size),
                    draws.std(ddof=1) / math.sqrt(draws.size))
    assert abs(draws.mean() - ref.mean()) <= 3 * se


def test_bridge_then_halves_reproduces_two_step_law(params):
    x_l, d = 0.03, 0.2
    n = 20000
    s = RngStream(33)
    x_r = sample_transition(s, params, x_l, 2 * d, size=n)
    mids = np.array([sample_bridge_midvalue(s, params, BridgeSegment(0.0, 2 * d, x_l, xr), d)
                     for xr in x_r])
    direct = sample_transition(RngStream(34), params, x_l, d, size=n)
    assert stats.ks_2samp(mids, direct).pvalue > 0.01


def test_bridge_domain(params):
    seg = BridgeSegment(0.0, 1.0, 0.1, 0.2)
    for bad in (0.0, 1.0, -0.5):
        with pytest.raises(ValueError):
            sample_bridge_midvalue(RngStream(0), params, seg, bad)
    with pytest.raises(ValueError):
        BridgeSegment(1.0, 1.0, 0.1, 0.1)
    with pytest.raises(ValueError):
        BridgeSegment(0.0, 1.0, -0.1, 0.1)
    with pytest.raises(ValueError):
        sample_transition(RngStream(0), params, -0.1, 1.0)
    with pytest.raises(ValueError):
        sample_transition(RngStream(0), params, 0.1, 0.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=0.0, max_value=10.0), st.floats(min_value=1e-8, max_value=10.0),
       st.floats(min_value=0.0, max_value=10.0), st.floats(min_value=0.01, max_value=0.99),
       st.integers(min_value=0, max_value=2**32))
def test_samples_never_negative(x, dtau, y, frac, seed):
    p = HestonParams.benchmark()
    s = RngStream(seed)
    assert np.all(sample_transition(s, p, x, dtau, size=10) >= 0.0)
    seg = BridgeSegment(0.5, 0.5 + dtau, x, y)
    assert np.all(sample_bridge_midvalue(s, p, seg, 0.5 + frac * dtau, size=10) >= 0.0)
