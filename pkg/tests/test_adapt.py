import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptheston import (AdaptConfig, AdaptDepthError, BridgeSegment, HestonParams,
                         RefineSpace, RngStream, bridge_moments, estimate_integral,
                         segment_variance, tau_of_t)
from adaptheston.adapt import estimate_integral_batch
from adaptheston.oracles import bridge_integral_samples, variance_and_stderr

X_R = 0.02 * math.exp(6.21)


def test_huge_tolerance_keeps_root(params):
    est = estimate_integral(RngStream(1), params, AdaptConfig(1e6), 0.0, 1.0, params.v0, X_R)
    root = bridge_moments(params, params.v0, X_R, 0.0, tau_of_t(params.time_map, 1.0))
    assert est.leaf_count == 1
    assert est.value == root.m1
    assert est.variance_sum == root.var
    assert est.interior_points.shape == (0, 2)


@pytest.mark.parametrize("reservoir", [True, False])
@pytest.mark.parametrize("space", list(RefineSpace))
def test_single_run_invariants(params, reservoir, space):
    cfg = AdaptConfig(1e-6, refine_space=space, reservoir_enabled=reservoir)
    est = estimate_integral(RngStream(2), params, cfg, 0.0, 1.0, params.v0, X_R)
    assert est.leaf_count == len(est.interior_points) + 1
    assert est.value >= 0
    assert est.variance_sum <= cfg.delta0
    t = est.interior_points[:, 0]
    assert np.all((t > 0) & (t < 1))
    assert np.all(est.interior_points[:, 1] >= 0)
    if not reservoir:
        assert est.reservoir_residual == 0.0
    else:
        assert est.variance_sum + est.reservoir_residual == pytest.approx(cfg.delta0,
                                                                          rel=1e-12)


def test_left_child_processed_first(params):
    # depth-first with the earlier half first: the first interior point is the
    # root midpoint and the second lies in the left half
    est = estimate_integral(RngStream(3), params, AdaptConfig(1e-7), 0.0, 1.0, params.v0, X_R)
    pts = est.interior_points[:, 0]
    assert pts[0] == 0.5
    assert pts[1] == 0.25


def test_deterministic(params):
    cfg = AdaptConfig(1e-6)
    a = estimate_integral(RngStream(4, 2), params, cfg, 0.0, 1.0, params.v0, X_R)
    b = estimate_integral(RngStream(4, 2), params, cfg, 0.0, 1.0, params.v0, X_R)
    assert a.value == b.value and a.leaf_count == b.leaf_count
    assert np.array_equal(a.interior_points, b.interior_points)


def test_batch_matches_single_runs(params):
    cfg = AdaptConfig(1e-6)
    x_r = np.array([0.5, X_R, 30.0])
    batch = estimate_integral_batch(5, params, cfg, 0.0, 1.0, params.v0, x_r)
    s = RngStream(5, 0)
    for i, xr in enumerate(x_r):
        est = estimate_integral(s, params, cfg, 0.0, 1.0, params.v0, xr, record_points=False)
        assert batch.value[i] == est.value
        assert batch.leaf_count[i] == est.leaf_count


@pytest.mark.parametrize("reservoir", [True, False])
def test_tolerance_accounting_batch(params, reservoir):
    cfg = AdaptConfig(1e-6, reservoir_enabled=reservoir)
    b = estimate_integral_batch(6, params, cfg, 0.0, 1.0, params.v0, n_runs=2000)
    assert len(b) == 2000
    assert np.all(b.variance_sum <= cfg.delta0)
    assert np.all(b.value >= 0)


def test_reservoir_saves_segments(params):
    res = estimate_integral_batch(7, params, AdaptConfig(1e-6), 0.0, 1.0, params.v0,
                                  n_runs=1000)
    plain = estimate_integral_batch(7, params, AdaptConfig(1e-6, reservoir_enabled=False),
                                    0.0, 1.0, params.v0, n_runs=1000)
    assert res.leaf_count.mean() <= plain.leaf_count.mean()


def test_depth_error_carries_partial_state(params):
    cfg = AdaptConfig(1e-12, max_depth=2)
    with pytest.raises(AdaptDepthError) as info:
        estimate_integral(RngStream(8), params, cfg, 0.0, 1.0, params.v0, X_R)
    partial = info.value.partial
    assert partial is not None
    assert partial.leaf_count <= 4
    with pytest.raises(AdaptDepthError):
        estimate_integral_batch(8, params, cfg, 0.0, 1.0, params.v0, n_runs=3)


@pytest.mark.parametrize("kw", [dict(delta0=0.0), dict(delta0=-1.0),
                                dict(delta0=1e-6, max_depth=0),
                                dict(delta0=1e-6, refine_space="x_space")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        AdaptConfig(**kw)


def test_input_validation(params):
    cfg = AdaptConfig(1e-6)
    with pytest.raises(ValueError):
        estimate_integral(RngStream(0), params, cfg, 1.0, 1.0, 0.1, 0.1)
    with pytest.raises(ValueError):
        estimate_integral(RngStream(0), params, cfg, 0.0, 1.0, -0.1, 0.1)
    with pytest.raises(TypeError):
        estimate_integral(np.random.default_rng(0), params, cfg, 0.0, 1.0, 0.1, 0.1)
    with pytest.raises(ValueError):
        estimate_integral_batch(0, params, cfg, 0.0, 1.0, [0.1, -0.1], [0.1, 0.1])


def test_segment_variance_zero_endpoints(params):
    assert segment_variance(params, BridgeSegment(0.0, 0.3, 0.0, 0.0)) > 0


def test_segment_variance_quadratic_shrink(params):
    full = segment_variance(params, BridgeSegment(1.0, 1.001, 0.3, 0.35))
    half = segment_variance(params, BridgeSegment(1.0, 1.0005, 0.3, 0.325))
    assert half < 0.3 * full


@pytest.mark.parametrize("i", range(5))
def test_segment_variance_against_oracle(params, i):
    rng = np.random.default_rng(500 + i)
    x, y, tl, tau = rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 5), rng.uniform(0.01, 2)
    s = bridge_integral_samples(600 + i, params, x, y, tl, tau, 20000, n_points=1024)
    var, se = variance_and_stderr(s)
    ref = segment_variance(params, BridgeSegment(tl, tl + tau, x, y))
    assert abs(ref - var) <= max(3 * se, 0.02 * var)


def test_segment_variance_type(params):
    with pytest.raises(TypeError):
        segment_variance(params, (0.0, 1.0, 0.1, 0.1))


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=0.0, max_value=0.5), st.floats(min_value=0.0, max_value=1000.0),
       st.floats(min_value=1e-7, max_value=1e-3), st.booleans(),
       st.integers(min_value=0, max_value=2**32))
def test_accounting_property(x_l, x_r, delta0, reservoir, seed):
    p = HestonParams.benchmark()
    cfg = AdaptConfig(delta0, reservoir_enabled=reservoir)
    est = estimate_integral(RngStream(seed), p, cfg, 0.0, 1.0, x_l, x_r)
    assert est.variance_sum <= delta0
    assert est.leaf_count == len(est.interior_points) + 1
    assert est.value >= 0.0
