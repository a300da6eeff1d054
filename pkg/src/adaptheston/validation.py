"""Oracle-based validation suites.

Each check compares a production quantity with an independent reference
from :mod:`adaptheston.oracles` (or a closed-form identity) and records
the observed value, the reference, the allowed deviation and the outcome.
Monte Carlo checks use fixed seeds and a three-standard-error band, and
distribution checks use a 1% significance level.  Sample sizes are kept at
desk scale so that ``run_validation("all")`` finishes in a few minutes.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import oracles
from .adapt import AdaptConfig, estimate_integral, estimate_integral_batch, segment_variance
from .besq import (BridgeSegment, HestonParams, sample_bridge_midvalue, sample_transition,
                   t_of_tau, tau_of_t, v_of_x)
from .moments import (SERIES_SWITCH, bridge_moments, coefficients, laplace_moments_fd,
                      laplace_transform, phi_quantities, solve_phi_numeric)
from .samplers import (BesselDistParams, RngStream, bessel_pmf, sample_bessel, sample_gamma,
                       sample_normal, sample_poisson)
from .specfun import bessel_quotient, hankel_threshold, log_modified_bessel_i

__all__ = ["Check", "SUITES", "run_validation", "moments_comparison", "CHECK_HEADER",
           "COMPARISON_HEADER"]

CHECK_HEADER = ("suite", "check", "value", "reference", "tolerance", "passed")
COMPARISON_HEADER = ("x", "y", "tau_l", "tau", "quantity", "formula", "oracle",
                     "oracle_stderr", "rel_diff", "passed")

NU = HestonParams.benchmark().order


@dataclass(frozen=True)
class Check:
    """Outcome of one validation check."""

    suite: str
    check: str
    value: float
    reference: float
    tolerance: float
    passed: bool

    def row(self):
        return (self.suite, self.check, self.value, self.reference, self.tolerance,
                self.passed)


class _Recorder:
    def __init__(self, suite):
        self.suite = suite
        self.checks = []

    def close(self, name, value, reference, tol, relative=False):
        """Pass when ``|value - reference| <= tol`` (times ``|reference|`` if relative)."""
        scale = abs(reference) if relative else 1.0
        ok = bool(abs(value - reference) <= tol * scale)
        self.checks.append(Check(self.suite, name, float(value), float(reference), float(tol),
                                 ok))

    def mc(self, name, estimate, stderr, reference, k=3.0):
        self.checks.append(Check(self.suite, name, float(estimate), float(reference),
                                 float(k * stderr), bool(abs(estimate - reference) <= k * stderr)))

    def pvalue(self, name, p, level=0.01):
        self.checks.append(Check(self.suite, name, float(p), float(level), 0.0,
                                 bool(p >= level)))

    def flag(self, name, ok, value=float("nan"), reference=float("nan")):
        self.checks.append(Check(self.suite, name, float(value), float(reference), 0.0,
                                 bool(ok)))


def _mean_check(rec, name, draws, reference):
    rec.mc(name, draws.mean(), draws.std(ddof=1) / math.sqrt(draws.size), reference)


def _var_check(rec, name, draws, reference):
    var, se = oracles.variance_and_stderr(draws)
    rec.mc(name, var, se, reference)


def _pooled_chisquare(counts, expected, min_expected=5.0):
    # merge adjacent cells until every expected count reaches min_expected
    counts = np.asarray(counts, dtype=float)
    expected = np.asarray(expected, dtype=float)
    expected = expected * counts.sum() / expected.sum()
    obs, exp = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(counts, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs.append(o_acc)
            exp.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0:
        obs[-1] += o_acc
        exp[-1] += e_acc
    obs, exp = np.array(obs), np.array(exp)
    return stats.chisquare(obs, exp).pvalue


# ---------------------------------------------------------------------------
# Suites


def _suite_specfun(seed):
    rec = _Recorder("specfun")
    ref = oracles.series_bessel_i(1.5, 1.0) / oracles.series_bessel_i(0.5, 1.0)
    rec.close("quotient(0.5, 1) vs series", bessel_quotient(0.5, 1.0), ref, 1e-12, True)
    rec.close("quotient(nu, 0)", bessel_quotient(NU, 0.0), 0.0, 0.0)
    r = 1e6
    rec.close("quotient(nu, 1e6) vs asymptotic", bessel_quotient(NU, r),
              1.0 - (NU + 0.5) / r, 1e-9)
    worst = 0.0
    for nu in (NU, 0.0, 0.5, 2.5):
        for x in np.geomspace(1e-6, 50.0, 25):
            terms = 60 + int(2 * x)
            ref = (oracles.series_bessel_i(nu + 1, x, terms)
                   / oracles.series_bessel_i(nu, x, terms))
            worst = max(worst, abs(bessel_quotient(nu, x) / ref - 1.0))
    rec.close("quotient vs series ratio, r in [1e-6, 50]", worst, 0.0, 1e-10)
    rec.close("log I_0(0)", log_modified_bessel_i(0.0, 0.0), 0.0, 0.0)
    rec.close("log I_0.5(2) vs series", log_modified_bessel_i(0.5, 2.0),
              math.log(oracles.series_bessel_i(0.5, 2.0)), 1e-13)
    r = 700.0
    asym = r - 0.5 * math.log(2 * math.pi * r) + math.log1p(-(4 * NU**2 - 1) / (8 * r))
    rec.close("log I_nu(700) vs asymptotic", log_modified_bessel_i(NU, r), asym, 1e-5, True)
    rec.flag("log I finite at 1e8", math.isfinite(log_modified_bessel_i(NU, 1e8)))
    # I'_nu / I_nu = nu/r + R_nu(r), by central differences of log I
    rng = np.random.default_rng(seed)
    worst = 0.0
    for nu, x in zip(rng.uniform(-0.9, 3.0, 20), rng.uniform(0.1, 60.0, 20)):
        h = 1e-5 * x
        d = (log_modified_bessel_i(nu, x + h) - log_modified_bessel_i(nu, x - h)) / (2 * h)
        worst = max(worst, abs(d / (nu / x + bessel_quotient(nu, x)) - 1.0))
    rec.close("derivative identity at 20 points", worst, 0.0, 1e-8)
    worst = 0.0
    for nu in (NU, 0.0, 1.5):
        t = hankel_threshold(nu)
        for x in (t * (1 - 1e-9), t * (1 + 1e-9)):
            ref = math.log(oracles.series_bessel_i(nu, x, 200))
            worst = max(worst, abs(log_modified_bessel_i(nu, x) / ref - 1.0))
    rec.close("log I across the expansion switch vs series", worst, 0.0, 1e-13)
    ok = all(0.0 < bessel_quotient(NU, x) < 1.0 for x in np.geomspace(1e-8, 1e8, 50))
    rec.flag("0 < quotient < 1", ok)
    q = bessel_quotient(NU, np.geomspace(1e-8, 1e8, 200))
    rec.flag("quotient increasing in r", bool(np.all(np.diff(q) >= 0)))
    return rec.checks


def _suite_samplers(seed, n=10**6):
    rec = _Recorder("samplers")
    s = RngStream(seed)
    _mean_check(rec, "gamma(2, 3) mean", sample_gamma(s.spawn(1), 2.0, 3.0, n), 6.0)
    _var_check(rec, "gamma(0.6342, 2) variance", sample_gamma(s.spawn(2), 0.6342, 2.0, n),
               0.6342 * 4.0)
    e = sample_gamma(s.spawn(3), 1.0, 1.7, 10**5)
    rec.pvalue("gamma(1, s) vs exponential, KS", stats.kstest(e, "expon", args=(0, 1.7)).pvalue)
    rec.flag("poisson(0) is 0", bool(np.all(sample_poisson(s.spawn(4), 0.0, 1000) == 0)))
    d = sample_poisson(s.spawn(5), 4.7, n).astype(float)
    _mean_check(rec, "poisson(4.7) mean", d, 4.7)
    _var_check(rec, "poisson(4.7) variance", d, 4.7)
    d = sample_poisson(s.spawn(6), 100.0, 10**5)
    k = np.arange(d.max() + 1)
    rec.pvalue("poisson(100) pmf, chi-square",
               _pooled_chisquare(np.bincount(d, minlength=k.size), stats.poisson.pmf(k, 100.0)))
    rec.flag("bessel(nu, 0) is 0",
             bool(np.all(sample_bessel(s.spawn(7), BesselDistParams(NU, 0.0), 1000) == 0)))
    d = sample_bessel(s.spawn(8), BesselDistParams(NU, 2.0), n).astype(float)
    _mean_check(rec, "bessel(nu, 2) mean", d, bessel_quotient(NU, 2.0))
    n_ref, pmf_ref, _ = oracles.bessel_pmf_by_summation(NU, 2.0)
    rec.close("bessel mean identity vs pmf summation", float(np.dot(n_ref, pmf_ref)),
              bessel_quotient(NU, 2.0), 1e-12, True)
    d = sample_bessel(s.spawn(9), BesselDistParams(1.5, 10.0), 10**5)
    n_ref, pmf_ref, _ = oracles.bessel_pmf_by_summation(1.5, 10.0)
    counts = np.bincount(d, minlength=n_ref.size)[: n_ref.size]
    rec.pvalue("bessel(1.5, 10) pmf, chi-square", _pooled_chisquare(counts, pmf_ref))
    worst = 0.0
    for nu in (NU, 0.0, 1.5, 5.0):
        for z in (0.01, 0.5, 2.0, 10.0, 40.0, 300.0):
            n_ref, _, total = oracles.bessel_pmf_by_summation(nu, z)
            worst = max(worst, abs(bessel_pmf(BesselDistParams(nu, z), n_ref).sum() - 1.0))
    rec.close("bessel pmf sums to 1", worst, 0.0, 1e-12)
    d = sample_normal(s.spawn(10), n)
    _mean_check(rec, "normal mean", d, 0.0)
    _var_check(rec, "normal variance", d, 1.0)
    _mean_check(rec, "normal symmetry", (d > 0).astype(float), 0.5)
    a = sample_normal(RngStream(seed, 11), 1000)
    b = sample_normal(RngStream(seed, 11), 1000)
    rec.flag("equal streams reproduce", bool(np.array_equal(a, b)))
    c = sample_normal(RngStream(seed, 12), 10**5)
    a = sample_normal(RngStream(seed, 11), 10**5)
    rec.pvalue("distinct streams uncorrelated", stats.pearsonr(a, c).pvalue)
    return rec.checks


def transition_moment_configs():
    """``(x, dtau)`` pairs used for the transition identities."""
    return [(0.0, 0.5), (0.0102, 0.5), (0.3, 0.05), (1.5, 2.0), (0.02, 7.44)]


def _suite_besq(seed, n=10**6):
    rec = _Recorder("besq")
    p = HestonParams.benchmark()
    tm = p.time_map
    rec.close("tau(1)", tau_of_t(tm, 1.0), 0.3721 / 24.84 * math.expm1(6.21), 1e-12, True)
    worst = max(abs(t_of_tau(tm, tau_of_t(tm, t)) / t - 1.0) for t in (0.1, 0.5, 1.0))
    rec.close("time map round trip", worst, 0.0, 1e-12)
    rec.close("v_of_x(1, 1)", v_of_x(tm, 1.0, 1.0), math.exp(-6.21), 1e-15, True)
    lam = p.dimension
    s = RngStream(seed)
    for i, (x, dt) in enumerate(transition_moment_configs()):
        d = sample_transition(s.spawn(i + 1), p, x, dt, n)
        _mean_check(rec, f"transition mean x={x} dtau={dt}", d, x + lam * dt)
        _var_check(rec, f"transition variance x={x} dtau={dt}", d,
                   4 * x * dt + 2 * lam * dt * dt)
    # the origin is reachable for nu < 0: mass near 0 matches the exact law
    x0, dt, eps = 1e-4, 0.5, 1e-6
    d = sample_transition(s.spawn(20), p, x0, dt, n)
    exact = stats.ncx2.cdf(eps / dt, lam, x0 / dt)
    frac = float(np.mean(d < eps))
    rec.mc("mass below 1e-6 vs exact transition law", frac,
           math.sqrt(exact * (1 - exact) / n), exact)
    rec.flag("origin reachable for nu < 0", frac > 0, frac)
    # Markov consistency: one step versus two chained steps
    one = sample_transition(s.spawn(21), p, 0.02, 1.0, 10**5)
    mid = sample_transition(s.spawn(22), p, 0.02, 0.4, 10**5)
    chained = s.spawn(23)
    two = np.array([sample_transition(chained, p, m, 0.6) for m in mid])
    rec.pvalue("one step vs two steps, KS", stats.ks_2samp(one, two).pvalue)
    # bridge midpoint against forward paths rejected on their right end
    x_l, x_r, tl, tr = 0.0102, 0.02, 0.0, 0.2
    tm_ = 0.5 * (tl + tr)
    seg = BridgeSegment(tl, tr, x_l, x_r)
    br = sample_bridge_midvalue(s.spawn(24), p, seg, tm_, 10**5)
    rej, _ = oracles.rejection_bridge_midpoints(seed + 1, p, x_l, x_r, tl, tm_, tr, 5e-4, 20000)
    se = math.hypot(br.std() / math.sqrt(br.size), rej.std() / math.sqrt(rej.size))
    rec.mc("bridge midpoint mean vs rejection oracle", br.mean(), se, rej.mean())
    rec.pvalue("bridge midpoint law vs rejection oracle, KS", stats.ks_2samp(br, rej).pvalue)
    # composition: x_l -> bridge midpoint given a forward right end reproduces
    # the two-half-step forward law of the midpoint
    x0, dt = 0.0102, 0.2
    m = 30000
    right = sample_transition(s.spawn(25), p, x0, dt, m)
    inner = s.spawn(26)
    comp = np.array([sample_bridge_midvalue(inner, p, BridgeSegment(0.0, dt, x0, xr), 0.5 * dt)
                     for xr in right])
    fwd = sample_transition(s.spawn(30), p, x0, 0.5 * dt, m)
    se = math.hypot(comp.std() / math.sqrt(m), fwd.std() / math.sqrt(m))
    rec.mc("composition oracle, midpoint mean", comp.mean(), se, fwd.mean())
    rec.pvalue("composition oracle, midpoint law KS", stats.ks_2samp(comp, fwd).pvalue)
    z = sample_bridge_midvalue(s.spawn(31), p, BridgeSegment(0.0, 0.3, 0.0, 0.0), 0.1, 10**5)
    scale = 2 * 0.1 * 0.2 / 0.3
    rec.pvalue("zero endpoints give a gamma midpoint, KS",
               stats.kstest(z, "gamma", args=(NU + 1.0, 0, scale)).pvalue)
    return rec.checks


def coefficient_configs():
    """``(tau_l, tau)`` pairs spanning both coefficient branches."""
    return [(0.0, 1.0), (0.0, 0.5), (1.0, 0.3), (5.0, 2.0), (0.3, 1e-3), (2.0, 0.01),
            (0.0, 1e-4), (0.0, 7.4405)]


def small_tau_ratios(params, tau_l, tau=1e-4):
    """Coefficient ratios and their small-``tau`` limits.

    The limits are ``(-1, 4/3, -2) a1 / b^2`` for ``A1, B1, C1`` over
    ``tau^2`` and ``(5/6, 8/15, 4/3) a1^2 / b^4`` for ``A2, B2, C2`` over
    ``tau^4``, with ``a1 = 4 / sigma_v^2`` and ``b = 1 + 4 kappa tau_l /
    sigma_v^2``.

    Returns
    -------
    dict
        Name to ``(ratio, limit)``.
    """
    s2 = params.sigma_v**2
    a1 = 4.0 / s2
    b = 1.0 + 4.0 * params.kappa * tau_l / s2
    co = coefficients(params, tau_l, tau)
    lim1 = {"A1": -1.0, "B1": 4.0 / 3.0, "C1": -2.0}
    lim2 = {"A2": 5.0 / 6.0, "B2": 8.0 / 15.0, "C2": 4.0 / 3.0}
    out = {k: (getattr(co, k) / tau**2, v * a1 / b**2) for k, v in lim1.items()}
    out.update({k: (getattr(co, k) / tau**4, v * a1**2 / b**4) for k, v in lim2.items()})
    return out


def laplace_configs():
    """``(x, y, tau_l, tau)`` used for the transform checks."""
    return [(0.010201, 0.02, 0.0, 0.5), (0.5, 0.1, 1.0, 0.2), (0.0, 0.3, 0.0, 1.0),
            (0.8, 0.0, 2.0, 0.05), (0.2, 0.9, 4.0, 1.5)]


def _suite_moments(seed, n_paths=20000):
    rec = _Recorder("moments")
    p = HestonParams.benchmark()
    worst = 0.0
    for tl, tau in coefficient_configs():
        got = coefficients(p, tl, tau).as_dict()
        ref = oracles.coefficients_by_ivp(p, tl, tau)
        worst = max(worst, max(abs(got[k] / ref[k] - 1.0) for k in ref))
    rec.close("coefficients vs ODE oracle", worst, 0.0, 1e-8)
    s2 = p.sigma_v**2
    worst = 0.0
    for tl in (0.0, 1.0, 5.0):
        b = 1.0 + 4.0 * p.kappa * tl / s2
        tau = SERIES_SWITCH * b * s2 / (4.0 * p.kappa)
        lo = coefficients(p, tl, tau * (1 - 1e-12)).as_dict()
        hi = coefficients(p, tl, tau * (1 + 1e-12)).as_dict()
        worst = max(worst, max(abs(lo[k] / hi[k] - 1.0) for k in lo))
    rec.close("coefficients continuous across the series switch", worst, 0.0, 1e-9)
    # at tau_l = 0 the relative correction is about 4 kappa tau / sigma_v^2, so
    # 0.1% agreement needs tau well below 1e-4 there
    for tl, tau in ((1.0, 1e-4), (1.0, 1e-7), (0.0, 1e-7)):
        worst = max(abs(r / lim - 1.0) for r, lim in small_tau_ratios(p, tl, tau).values())
        rec.close(f"small-tau limits, tau_l={tl}, tau={tau}", worst, 0.0, 1e-3)
    m = bridge_moments(p, 0.0, 0.0, 0.0, 0.5)
    co = coefficients(p, 0.0, 0.5)
    rec.close("m1 at zero endpoints", m.m1, (co.A1 + co.B1) * (p.order + 1), 1e-14, True)
    x, y = 0.3, 0.4
    m = bridge_moments(p, x, y, 0.0, 1e-8)
    co = coefficients(p, 0.0, 1e-8)
    rec.flag("m1 vanishes linearly", m.m1 < 1e-6 * (x + y) * (4 / s2), m.m1)
    rec.flag("variance vanishes quadratically", m.var < 1e-10 * (x + y) ** 2, m.var)
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(1000):
        xx, yy = rng.uniform(0, 2, 2) ** 3
        mm = bridge_moments(p, xx, yy, rng.uniform(0, 5), 10 ** rng.uniform(-6, 0.5))
        ok &= mm.var >= 0 and mm.m2 >= mm.m1**2
    rec.flag("variance >= 0 and m2 >= m1^2 at 1000 points", ok)
    w1 = w2 = w3 = 0.0
    for x, y, tl, tau in laplace_configs():
        mm = bridge_moments(p, x, y, tl, tau)
        f1, f2 = laplace_moments_fd(p, x, y, tl, tau)
        w1 = max(w1, abs(f1 / mm.m1 - 1.0))
        w2 = max(w2, abs(f2 / mm.m2 - 1.0))
        w3 = max(w3, abs(laplace_transform(p, x, y, tl, tau, 0.0) - 1.0))
    rec.close("transform differences reproduce m1", w1, 0.0, 1e-5)
    rec.close("transform differences reproduce m2", w2, 0.0, 1e-4)
    rec.close("transform at 0 is 1", w3, 0.0, 0.0)
    worst = 0.0
    for theta, tl, tau in [(0.5, 0.0, 0.5), (3.0, 1.0, 0.2), (10.0, 0.0, 2.0),
                           (0.1, 4.0, 1.0), (25.0, 0.5, 0.05)]:
        s2_ = p.sigma_v**2
        a = 8 * theta * tau * tau / s2_
        b = 1 + 4 * p.kappa * tl / s2_
        c = 4 * p.kappa * tau / s2_
        closed = phi_quantities(a, b, c)
        numeric = solve_phi_numeric(p, tl, tau, theta)
        worst = max(worst, max(abs(u / v - 1.0) for u, v in zip(closed, numeric)))
    rec.close("phi closed forms vs numerical BVP", worst, 0.0, 1e-8)
    x, y, tl, tau = laplace_configs()[0]
    samples = oracles.bridge_integral_samples(seed, p, x, y, tl, tau, n_paths)
    mm = bridge_moments(p, x, y, tl, tau)
    mean, se = oracles.mean_and_stderr(samples)
    rec.mc("m1 vs bridge oracle", mm.m1, se, mean)
    var, se = oracles.variance_and_stderr(samples)
    rec.mc("variance vs bridge oracle", mm.var, se, var)
    for theta in (0.5, 1.0, 5.0):
        mean, se = oracles.mean_and_stderr(np.exp(-theta * samples))
        rec.mc(f"transform at {theta} vs bridge oracle",
               laplace_transform(p, x, y, tl, tau, theta), se, mean)
    return rec.checks


def _suite_adapt(seed, n_runs=10**4):
    rec = _Recorder("adapt")
    p = HestonParams.benchmark()
    x_r = 0.02 * math.exp(p.kappa)
    est = estimate_integral(RngStream(seed), p, AdaptConfig(1e6), 0.0, 1.0, p.v0, x_r)
    root = bridge_moments(p, p.v0, x_r, 0.0, tau_of_t(p.time_map, 1.0)).m1
    rec.close("huge tolerance keeps the root segment", est.value, root, 1e-14, True)
    rec.flag("huge tolerance gives one leaf", est.leaf_count == 1)
    est = estimate_integral(RngStream(seed), p, AdaptConfig(1e-6), 0.0, 1.0, p.v0, x_r)
    rec.flag("leaf count = interior points + 1",
             est.leaf_count == len(est.interior_points) + 1)
    for reservoir in (True, False):
        cfg = AdaptConfig(1e-6, reservoir_enabled=reservoir)
        b = estimate_integral_batch(seed, p, cfg, 0.0, 1.0, p.v0, n_runs=n_runs)
        rec.flag(f"variance sum <= delta0 (reservoir={reservoir})",
                 bool(np.all(b.variance_sum <= cfg.delta0)), float(b.variance_sum.max()),
                 cfg.delta0)
    res = estimate_integral_batch(seed, p, AdaptConfig(1e-6), 0.0, 1.0, p.v0, n_runs=1000)
    plain = estimate_integral_batch(seed, p, AdaptConfig(1e-6, reservoir_enabled=False),
                                    0.0, 1.0, p.v0, n_runs=1000)
    rec.flag("reservoir uses no more leaves than plain on average",
             res.leaf_count.mean() <= plain.leaf_count.mean(), res.leaf_count.mean(),
             plain.leaf_count.mean())
    fine = estimate_integral_batch(seed, p, AdaptConfig(1e-6), 0.0, 1.0, p.v0, n_runs=1000)
    coarse = estimate_integral_batch(seed + 1, p, AdaptConfig(1e-5), 0.0, 1.0, p.v0,
                                     n_runs=1000)
    rec.flag("median leaves at 1e-5 <= median at 1e-6",
             np.median(coarse.leaf_count) <= np.median(fine.leaf_count),
             float(np.median(coarse.leaf_count)), float(np.median(fine.leaf_count)))
    b = estimate_integral_batch(seed + 2, p, AdaptConfig(1e-6), 0.0, 1.0, p.v0, n_runs=n_runs)
    rho = stats.spearmanr(np.abs(b.x_r - b.x_l), b.leaf_count).statistic
    rec.flag("leaf count rises with the endpoint gap (Spearman)", rho > 0, rho, 0.0)
    # unbiasedness against the fine-grid oracle on matched endpoints
    n = 5000
    b = estimate_integral_batch(seed + 3, p, AdaptConfig(1e-6), 0.0, 1.0, p.v0, n_runs=n)
    ref = oracles.integrated_variance_samples(seed + 4, p, 0.0, 1.0, b.x_l, b.x_r, n)
    diff = b.value - ref
    rec.mc("estimate vs fine-grid oracle, paired mean difference", diff.mean(),
           diff.std(ddof=1) / math.sqrt(n), 0.0)
    # segment variance shrinks quadratically
    seg = BridgeSegment(1.0, 1.0 + 1e-3, 0.3, 0.35)
    half = BridgeSegment(1.0, 1.0 + 5e-4, 0.3, 0.325)
    rec.flag("segment variance: halving the segment cuts it below 0.3x",
             segment_variance(p, half) < 0.3 * segment_variance(p, seg))
    return rec.checks


SUITES = {
    "specfun": _suite_specfun,
    "samplers": _suite_samplers,
    "besq": _suite_besq,
    "moments": _suite_moments,
    "adapt": _suite_adapt,
}


def run_validation(suite="all", seed=20240601):
    """Run one validation suite, or all of them.

    Parameters
    ----------
    suite : {"specfun", "samplers", "besq", "moments", "adapt", "all"}
    seed : int

    Returns
    -------
    list of Check
        Overall success is ``all(c.passed for c in checks)``.
    """
    if suite == "all":
        names = list(SUITES)
    elif suite in SUITES:
        names = [suite]
    else:
        raise ValueError(f"unknown suite {suite!r}; choose from {sorted(SUITES)} or 'all'")
    checks = []
    for name in names:
        checks.extend(SUITES[name](seed))
    return checks


def random_moment_configs(n, seed):
    """Random ``(x, y, tau_l, tau)`` with x, y in [0, 1], tau in [0.01, 2], tau_l in [0, 5]."""
    rng = np.random.default_rng(seed)
    return [(float(rng.uniform(0, 1)), float(rng.uniform(0, 1)), float(rng.uniform(0, 5)),
             float(rng.uniform(0.01, 2.0))) for _ in range(n)]


def moments_comparison(params=None, configs=None, n_paths=10**5, n_points=2**12, seed=0,
                       rel_tol=0.02, k=3.0, workers=1):
    """Closed-form bridge moments against the fine-grid Monte Carlo oracle.

    A quantity passes when ``|formula - oracle| <= max(k * stderr,
    rel_tol * |oracle|)``.

    Returns
    -------
    list of tuple
        Rows matching :data:`COMPARISON_HEADER`, two per configuration.
    """
    params = params or HestonParams.benchmark()
    configs = configs if configs is not None else random_moment_configs(20, seed)
    rows = []
    for i, (x, y, tl, tau) in enumerate(configs):
        s = oracles.bridge_integral_samples(oracles_seed(seed, i), params, x, y, tl, tau,
                                            n_paths, n_points, workers)
        mm = bridge_moments(params, x, y, tl, tau)
        for name, formula, (ref, se) in (("m1", mm.m1, oracles.mean_and_stderr(s)),
                                         ("var", mm.var, oracles.variance_and_stderr(s))):
            allowed = max(k * se, rel_tol * abs(ref))
            rows.append((x, y, tl, tau, name, formula, ref, se, formula / ref - 1.0,
                         bool(abs(formula - ref) <= allowed)))
    return rows


def oracles_seed(seed, index):
    ss = np.random.SeedSequence(int(seed), spawn_key=(7, int(index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
