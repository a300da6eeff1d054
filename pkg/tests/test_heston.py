import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptheston import (AdaptConfig, HestonParams, PathState, RngStream, Scheme,
                         price_european_call, simulate_terminal, step_exact,
                         step_predictor_corrector)
from adaptheston.bench import (SUBSTEP_LADDER, BenchScheme, ExperimentSpec, bias_nonincreasing,
                               run_bias_experiment, summarize_bias)
from adaptheston.heston import pc_step_kernel


def mean_se(a):
    return a.mean(), a.std(ddof=1) / math.sqrt(a.size)


def near_deterministic():
    return HestonParams(kappa=6.21, theta=0.019, sigma_v=1e-6, rho=0.0, s0=100.0,
                        v0=0.010201, r=0.0319)


def test_degenerate_variance_follows_mean_path():
    q = near_deterministic()
    dt = 0.5
    s = RngStream(1)
    state = PathState.initial(q)
    new, res = step_exact(s, q, AdaptConfig(1e-6), state, dt)
    v_mean = q.v0 + (q.theta - q.v0) * (1 - math.exp(-q.kappa * dt))
    assert abs(new.v - v_mean) < 1e-3
    int_v = q.theta * dt + (q.v0 - q.theta) * -math.expm1(-q.kappa * dt) / q.kappa
    assert res.integral_v == pytest.approx(int_v, rel=1e-6)


def test_degenerate_log_return_mean():
    q = near_deterministic()
    dt = 0.5
    log_s, _, _ = simulate_terminal(2, q, AdaptConfig(1e-6), dt, 10**5)
    int_v = q.theta * dt + (q.v0 - q.theta) * -math.expm1(-q.kappa * dt) / q.kappa
    m, se = mean_se(log_s - math.log(q.s0))
    assert abs(m - (q.mu * dt - 0.5 * int_v)) <= 3 * se


def test_martingale_property(params):
    dt = 0.25
    log_s, _, _ = simulate_terminal(3, params, AdaptConfig(1e-5), dt, 10**6)
    m, se = mean_se(np.exp(log_s - math.log(params.s0) - params.r * dt))
    assert abs(m - 1.0) <= 3 * se


def test_variance_marginal_matches_cir(params):
    k, th, s2, v0 = params.kappa, params.theta, params.sigma_v**2, params.v0
    e = math.exp(-k)
    mean = th + (v0 - th) * e
    var = v0 * s2 * e * (1 - e) / k + th * s2 * (1 - e) ** 2 / (2 * k)
    _, v, _ = simulate_terminal(4, params, AdaptConfig(1e-4), 1.0, 2 * 10**5)
    m, se = mean_se(v)
    assert abs(m - mean) <= 3 * se
    c = v - v.mean()
    sv = c.var(ddof=1)
    assert abs(sv - var) <= 3 * math.sqrt((np.mean(c**4) - sv**2) / v.size)


def test_step_exact_state_consistency(params):
    state = PathState.initial(params)
    new, res = step_exact(RngStream(5), params, AdaptConfig(1e-6), state, 0.3)
    assert new.t == 0.3
    assert new.v == pytest.approx(math.exp(-params.kappa * 0.3) * new.x, rel=1e-15)
    assert new.s > 0 and new.v >= 0 and res.integral_v >= 0
    with pytest.raises(ValueError):
        step_exact(RngStream(5), params, AdaptConfig(1e-6), state, 0.0)


def test_pc_without_noise_is_second_order():
    k, th, v0 = 6.21, 0.019, 0.05
    T = 0.2
    exact = th + (v0 - th) * math.exp(-k * T)
    errs = []
    for n in (16, 32, 64):
        dt = T / n
        v, ls = v0, 0.0
        for _ in range(n):
            ls, v = pc_step_kernel(np.random.default_rng(0), k, th, 0.0, 0.0, 0.0, ls, v, dt)
        errs.append(abs(v - exact))
    # global error O(dt), local error O(dt^2)
    assert errs[1] / errs[0] == pytest.approx(0.5, abs=0.05)
    assert errs[2] / errs[1] == pytest.approx(0.5, abs=0.05)
    dt = T / 16
    v1 = pc_step_kernel(np.random.default_rng(0), k, th, 0.0, 0.0, 0.0, 0.0, v0, dt)[1]
    assert abs(v1 - (th + (v0 - th) * math.exp(-k * dt))) < 0.5 * (k * dt) ** 2 * abs(v0 - th)


def test_pc_step_state(params):
    new = step_predictor_corrector(RngStream(6), params, PathState.initial(params), 0.01)
    assert new.s > 0 and new.v >= 0
    assert new.x == pytest.approx(math.exp(params.kappa * 0.01) * new.v)


def test_pc_bias_converges():
    specs = [ExperimentSpec(BenchScheme.PREDICTOR_CORRECTOR, substeps=n, seed=11)
             for n in SUBSTEP_LADDER]
    summaries = [summarize_bias(run_bias_experiment(s))[0] for s in specs]
    assert all(ok for *_, ok in bias_nonincreasing(summaries))


def test_pc_with_many_substeps_agrees_with_exact(params):
    exact = price_european_call(12, params, AdaptConfig(1e-6), 100.0, 1.0, 10**4)
    pc = price_european_call(13, params, None, 100.0, 1.0, 10**4,
                             Scheme.PREDICTOR_CORRECTOR, substeps=512)
    assert abs(pc.price - exact.price) <= 3 * math.hypot(pc.stderr, exact.stderr)


def test_zero_strike_gives_spot(params):
    res = price_european_call(14, params, AdaptConfig(1e-5), 0.0, 1.0, 10**5)
    assert abs(res.price - params.s0) <= 3 * res.stderr


def test_deep_in_the_money(params):
    res = price_european_call(15, params, AdaptConfig(1e-5), 1.0, 1.0, 10**5)
    assert abs(res.price - (params.s0 - math.exp(-params.r))) <= 3 * res.stderr


def test_step_decomposition_invariance(params):
    cfg = AdaptConfig(1e-6)
    one, _, _ = simulate_terminal(16, params, cfg, 1.0, 10**5)
    many, _, _ = simulate_terminal(17, params, cfg, 1.0, 10**5,
                                   reset_dates=[0.25, 0.5, 0.75, 1.0])
    (m1, s1), (m2, s2) = mean_se(one), mean_se(many)
    assert abs(m1 - m2) <= 3 * math.hypot(s1, s2)

    def var_se(a):
        c = a - a.mean()
        v = c.var(ddof=1)
        return v, math.sqrt((np.mean(c**4) - v * v) / a.size)

    (v1, e1), (v2, e2) = var_se(one), var_se(many)
    assert abs(v1 - v2) <= 3 * math.hypot(e1, e2)


def test_results_do_not_depend_on_workers(params):
    cfg = AdaptConfig(1e-5)
    a = simulate_terminal(18, params, cfg, 1.0, 3000, workers=1)
    b = simulate_terminal(18, params, cfg, 1.0, 3000, workers=2)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_price_result_unpacks(params):
    price, stderr, timing = price_european_call(19, params, AdaptConfig(1e-4), 100.0, 1.0, 500)
    assert stderr > 0 and timing >= 0 and price > 0


@pytest.mark.parametrize("kw", [dict(maturity=0.0), dict(n_paths=0)])
def test_simulate_validation(params, kw):
    args = dict(maturity=1.0, n_paths=10)
    args.update(kw)
    with pytest.raises(ValueError):
        simulate_terminal(0, params, AdaptConfig(1e-4), **args)


def test_scheme_requirements(params):
    with pytest.raises(ValueError):
        simulate_terminal(0, params, None, 1.0, 10)
    with pytest.raises(ValueError):
        simulate_terminal(0, params, None, 1.0, 10, Scheme.PREDICTOR_CORRECTOR)
    with pytest.raises(ValueError):
        price_european_call(0, params, AdaptConfig(1e-4), -1.0, 1.0, 10)
    with pytest.raises(ValueError):
        simulate_terminal(0, params, AdaptConfig(1e-4), 1.0, 10, reset_dates=[0.5, 0.4])


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=0.5, max_value=10.0), st.floats(min_value=0.005, max_value=0.1),
       st.floats(min_value=0.1, max_value=1.5), st.floats(min_value=-1.0, max_value=1.0),
       st.floats(min_value=0.0, max_value=0.2), st.integers(min_value=0, max_value=2**32),
       st.sampled_from(list(Scheme)))
def test_paths_stay_positive(kappa, theta, sigma_v, rho, v0, seed, scheme):
    q = HestonParams(kappa=kappa, theta=theta, sigma_v=sigma_v, rho=rho, s0=100.0, v0=v0,
                     r=0.02)
    log_s, v, _ = simulate_terminal(seed, q, AdaptConfig(1e-3), 1.0, 64, scheme, substeps=8)
    assert np.all(np.isfinite(log_s))
    assert np.all(v >= 0.0)
