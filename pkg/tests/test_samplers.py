import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from adaptheston import (BesselDistParams, RngStream, bessel_pmf, bessel_quotient,
                         sample_bessel, sample_gamma, sample_normal, sample_poisson)
from adaptheston.oracles import bessel_pmf_by_summation

NU = -0.3658
N = 10**6


def within(draws, reference, k=3.0):
    mean = draws.mean()
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    return abs(mean - reference) <= k * se


def var_within(draws, reference, k=3.0):
    c = draws - draws.mean()
    var = c.var(ddof=1)
    se = math.sqrt((np.mean(c**4) - var**2) / draws.size)
    return abs(var - reference) <= k * se


def test_stream_reproducible():
    a = sample_normal(RngStream(5, 3), size=100)
    b = sample_normal(RngStream(5, 3), size=100)
    assert np.array_equal(a, b)


def test_streams_with_different_ids_are_uncorrelated():
    a = sample_normal(RngStream(5, 0), size=10**5)
    b = sample_normal(RngStream(5, 1), size=10**5)
    assert abs(np.corrcoef(a, b)[0, 1]) < 3.0 / math.sqrt(10**5) * 1.5


def test_spawn_gives_independent_fresh_stream():
    s = RngStream(9)
    assert s.spawn(4) == RngStream(9, 4)
    assert np.array_equal(sample_normal(s.spawn(4), size=5), sample_normal(RngStream(9, 4), size=5))


@pytest.mark.parametrize("seed,sid", [(-1, 0), (0, -1), (2**64, 0), (1.5, 0)])
def test_stream_rejects_bad_ids(seed, sid):
    with pytest.raises(ValueError):
        RngStream(seed, sid)


def test_gamma_mean():
    assert within(sample_gamma(RngStream(1), 2.0, 3.0, size=N), 6.0)


def test_gamma_shape_one_is_exponential():
    draws = sample_gamma(RngStream(2), 1.0, 0.7, size=10**5)
    assert stats.kstest(draws, stats.expon(scale=0.7).cdf).pvalue > 0.01


def test_gamma_small_shape_variance():
    assert var_within(sample_gamma(RngStream(3), 0.6342, 2.0, size=N), 0.6342 * 4.0)


@pytest.mark.parametrize("shape,scale", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -2.0)])
def test_gamma_domain(shape, scale):
    with pytest.raises(ValueError):
        sample_gamma(RngStream(0), shape, scale)


def test_poisson_zero_mean():
    assert sample_poisson(RngStream(0), 0.0) == 0
    assert np.all(sample_poisson(RngStream(0), 0.0, size=100) == 0)


def test_poisson_moments():
    draws = sample_poisson(RngStream(4), 4.7, size=N).astype(float)
    assert within(draws, 4.7)
    assert var_within(draws, 4.7)


def test_poisson_large_mean_pmf():
    draws = sample_poisson(RngStream(5), 100.0, size=N)
    lo, hi = 60, 140
    counts = np.bincount(np.clip(draws, lo, hi) - lo, minlength=hi - lo + 1)
    probs = stats.poisson(100.0).pmf(np.arange(lo, hi + 1))
    probs[0] = stats.poisson(100.0).cdf(lo)
    probs[-1] = stats.poisson(100.0).sf(hi - 1)
    assert stats.chisquare(counts, probs * N).pvalue > 0.01


def test_poisson_domain():
    with pytest.raises(ValueError):
        sample_poisson(RngStream(0), -0.1)


def test_normal_moments_and_symmetry():
    draws = sample_normal(RngStream(6), size=N)
    assert within(draws, 0.0)
    assert var_within(draws, 1.0)
    assert within((draws > 0).astype(float), 0.5)


def test_bessel_zero_argument():
    assert sample_bessel(RngStream(0), BesselDistParams(NU, 0.0)) == 0
    assert np.all(sample_bessel(RngStream(0), BesselDistParams(2.0, 0.0), size=50) == 0)


def test_bessel_mean_identity():
    z = 2.0
    draws = sample_bessel(RngStream(7), BesselDistParams(NU, z), size=N).astype(float)
    assert within(draws, 0.5 * z * bessel_quotient(NU, z))


def test_bessel_pmf_chisquare():
    params = BesselDistParams(1.5, 10.0)
    draws = sample_bessel(RngStream(8), params, size=N)
    n, pmf, _ = bessel_pmf_by_summation(1.5, 10.0)
    counts = np.bincount(draws, minlength=n.size)[: n.size]
    keep = pmf * N >= 5
    exp = pmf[keep] * N
    obs = counts[keep].astype(float)
    # pool the thin tails into one cell each side
    obs = np.append(obs, N - obs.sum())
    exp = np.append(exp, N - exp.sum())
    assert stats.chisquare(obs, exp).pvalue > 0.01


@pytest.mark.parametrize("nu", [NU, 0.0, 1.5, 10.0])
@pytest.mark.parametrize("z", [1e-3, 0.5, 5.0, 80.0, 2000.0])
def test_bessel_pmf_normalisation(nu, z):
    n, pmf, _ = bessel_pmf_by_summation(nu, z)
    assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
    direct = bessel_pmf(BesselDistParams(nu, z), n)
    assert direct.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(direct, pmf, rtol=1e-9, atol=1e-300)


def test_bessel_params_domain():
    with pytest.raises(ValueError):
        BesselDistParams(-1.0, 1.0)
    with pytest.raises(ValueError):
        BesselDistParams(0.5, -1.0)


def test_samplers_reject_non_streams():
    with pytest.raises(TypeError):
        sample_gamma(np.random.default_rng(0), 1.0, 1.0)
    with pytest.raises(TypeError):
        sample_bessel(RngStream(0), (0.5, 1.0))


def test_stream_state_survives_pickle():
    s = RngStream(11, 2)
    t = pickle.loads(pickle.dumps(s))
    assert t == s


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=-0.99, max_value=30.0), st.floats(min_value=0.0, max_value=500.0),
       st.integers(min_value=0, max_value=2**32))
def test_bessel_draws_are_nonnegative_integers(nu, z, seed):
    draws = sample_bessel(RngStream(seed), BesselDistParams(nu, z), size=20)
    assert draws.dtype == np.int64
    assert np.all(draws >= 0)


@pytest.mark.parametrize("nu, z", [(3.816301271339018e-179, 2.225073858507203e-309),
                                   (2.0, 5e-324), (-0.5, 1e-200)])
def test_bessel_at_tiny_argument_is_zero(nu, z):
    assert np.all(sample_bessel(RngStream(0), BesselDistParams(nu, z), size=50) == 0)
    assert bessel_pmf(BesselDistParams(nu, z), 0) == pytest.approx(1.0, rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=1e-3, max_value=50.0), st.floats(min_value=1e-3, max_value=10.0),
       st.integers(min_value=0, max_value=2**32))
def test_gamma_draws_positive(shape, scale, seed):
    assert np.all(sample_gamma(RngStream(seed), shape, scale, size=20) >= 0.0)
