"""Independent reference computations used by the validation suites.

Nothing here is used on the production path.  Each oracle reaches the
quantity it checks by a different route than the code under test.

* Power series for ``I_nu`` (checks the continued fraction and log-Bessel).
* Direct pmf summation for the Bessel distribution (checks the sampler).
* ODE integration of the coefficient recursions (checks the closed forms).
* Fine-grid Monte Carlo of the bridge integral (checks the moment formulas,
  the Laplace transform and the adaptive estimator).
* Forward simulation with endpoint rejection (checks the bridge sampler).
"""

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from numba import njit
from scipy.integrate import quad, solve_ivp

from .besq import bridge_kernel, transition_kernel
from .samplers import RngStream

__all__ = [
    "series_bessel_i",
    "bessel_pmf_by_summation",
    "coefficients_by_ivp",
    "bridge_grid_sums",
    "bridge_integral_samples",
    "integrated_variance_samples",
    "rejection_bridge_midpoints",
    "mean_and_stderr",
    "variance_and_stderr",
]

ORACLE_BLOCK = 4096


def series_bessel_i(nu, r, terms=50):
    """``I_nu(r)`` by direct summation of its power series."""
    total = 0.0
    for k in range(terms):
        total += math.exp((2 * k + nu) * math.log(0.5 * r) - math.lgamma(k + 1.0)
                          - math.lgamma(k + nu + 1.0))
    return total


def bessel_pmf_by_summation(nu, z, tail=1e-15):
    """Bessel-distribution pmf normalised by summing its own terms.

    Terms are summed from ``n = 0`` until they fall below ``tail`` times the
    running total (past the mode).  No Bessel function is evaluated.

    Returns
    -------
    n : ndarray of int
    pmf : ndarray
    unnormalised_total : float
        Sum of the raw terms relative to the largest one.
    """
    logs = []
    n = 0
    peak = -math.inf
    while True:
        lt = ((2 * n + nu) * math.log(0.5 * z) - math.lgamma(n + 1.0)
              - math.lgamma(n + nu + 1.0))
        logs.append(lt)
        peak = max(peak, lt)
        if n > 0.5 * z + 10 and lt < peak + math.log(tail):
            break
        n += 1
    logs = np.array(logs)
    raw = np.exp(logs - logs.max())
    return np.arange(len(raw)), raw / raw.sum(), float(raw.sum())


def coefficients_by_ivp(params, tau_l, tau, rtol=1e-13):
    """Moment coefficients from numerical integration of their recursions.

    With ``M(u) = A (b + c u)^-2`` on ``[0, 1]``, ``Delta`` and ``Gamma``
    solve ``Delta'' = M``, ``Gamma'' = 2 M Delta`` with zero value at 0 and
    zero slope at 1.  Then ``A1 = Delta(1)``, ``C1 = Delta'(0)``,
    ``B1 = -2 int Delta``, ``A2 = Gamma(1)/2``, ``C2 = Gamma'(0)/2`` and
    ``B2 = int (3 Delta^2 - Gamma)``.
    """
    s2 = params.sigma_v**2
    big_a = 8.0 * tau * tau / s2
    b = 1.0 + 4.0 * params.kappa * tau_l / s2
    c = 4.0 * params.kappa * tau / s2

    def m(u):
        return big_a / (b + c * u) ** 2

    slope0 = -quad(m, 0.0, 1.0, epsabs=0.0, epsrel=1e-13)[0]

    def rhs(u, y):
        d, dp, g, gp, int_d, int_d2, int_g = y
        mm = m(u)
        return [dp, mm, gp, 2.0 * mm * d, d, d * d, g]

    sol = solve_ivp(rhs, (0.0, 1.0), [0.0, slope0, 0.0, 0.0, 0.0, 0.0, 0.0],
                    method="DOP853", rtol=rtol, atol=1e-30)
    d1, _, g0_1, gp0_1, int_d, int_d2, int_g0 = sol.y[:, -1]
    # Gamma = Gamma0 + k u with k fixing the slope at 1
    k = -gp0_1
    g1 = g0_1 + k
    int_g = int_g0 + 0.5 * k
    return dict(A1=d1, A2=0.5 * g1, B1=-2.0 * int_d, B2=3.0 * int_d2 - int_g,
                C1=slope0, C2=0.5 * k)


@njit(cache=True)
def _fill_sums(gen, nu, taus, coefs, x_l, x_r, out):
    # Sequential conditional fill: each grid value is drawn from the bridge
    # between the previous value and the fixed right end.
    n = taus.size
    last = taus[n - 1]
    for i in range(out.size):
        xl = x_l[i % x_l.size]
        xr = x_r[i % x_r.size]
        x = xl
        total = coefs[0] * xl + coefs[n - 1] * xr
        for k in range(1, n - 1):
            x = bridge_kernel(gen, nu, taus[k - 1], taus[k], last, x, xr)
            total += coefs[k] * x
        out[i] = total


def _block_job(args):
    seed, block, nu, taus, coefs, x_l, x_r, count = args
    out = np.empty(count)
    _fill_sums(RngStream(seed, block).generator, nu, taus, coefs, x_l, x_r, out)
    return out


def bridge_grid_sums(seed, params, taus, coefs, x_l, x_r, n_paths, workers=1):
    """``sum_k coefs[k] X(taus[k])`` over independent exact bridge paths.

    Parameters
    ----------
    seed : int
    params : HestonParams
    taus : ndarray
        Increasing BESQ-time grid, endpoints included.
    coefs : ndarray
        Weight of each grid value.
    x_l, x_r : float or ndarray
        Endpoint values; arrays give per-path endpoints (length ``n_paths``).
    n_paths : int
    workers : int, default 1

    Returns
    -------
    ndarray, shape (n_paths,)
    """
    x_l = np.atleast_1d(np.asarray(x_l, dtype=float))
    x_r = np.atleast_1d(np.asarray(x_r, dtype=float))
    taus = np.asarray(taus, dtype=float)
    coefs = np.asarray(coefs, dtype=float)
    jobs = []
    for b, lo in enumerate(range(0, n_paths, ORACLE_BLOCK)):
        hi = min(n_paths, lo + ORACLE_BLOCK)
        xl = x_l[lo:hi] if x_l.size > 1 else x_l
        xr = x_r[lo:hi] if x_r.size > 1 else x_r
        jobs.append((seed, b, params.order, taus, coefs, xl, xr, hi - lo))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_block_job, jobs))
    else:
        parts = [_block_job(j) for j in jobs]
    return np.concatenate(parts)


def _trapezoid_weights(grid):
    h = np.diff(grid)
    w = np.zeros(grid.size)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def bridge_integral_samples(seed, params, x, y, tau_l, tau, n_paths, n_points=2**12,
                            workers=1):
    """Samples of ``int X w0 du`` over ``[tau_l, tau_l + tau]`` given both ends.

    Trapezoid rule on ``n_points`` uniformly spaced BESQ-time grid points,
    with ``w0(u) = 4/sigma_v^2 (1 + 4 kappa u / sigma_v^2)^-2`` on the
    absolute axis.
    """
    s2 = params.sigma_v**2
    taus = np.linspace(tau_l, tau_l + tau, n_points)
    w0 = (4.0 / s2) / (1.0 + 4.0 * params.kappa * taus / s2) ** 2
    return bridge_grid_sums(seed, params, taus, w0 * _trapezoid_weights(taus), x, y,
                            n_paths, workers)


def integrated_variance_samples(seed, params, t_l, t_r, x_l, x_r, n_paths, n_points=2**12,
                                workers=1):
    """Samples of ``int V dt`` on ``[t_l, t_r]`` from a fine calendar-time grid.

    Grid values are exact bridge draws in BESQ time; ``V = exp(-kappa t) X``
    is integrated with the trapezoid rule on ``n_points`` uniform times.
    """
    ts = np.linspace(t_l, t_r, n_points)
    taus = params.time_map.tau(ts)
    coefs = np.exp(-params.kappa * ts) * _trapezoid_weights(ts)
    return bridge_grid_sums(seed, params, taus, coefs, x_l, x_r, n_paths, workers)


@njit(cache=True)
def _rejection_kernel(gen, nu, x_l, target, half_width, d1, d2, out):
    got = 0
    tried = 0
    while got < out.size:
        xm = transition_kernel(gen, nu, x_l, d1)
        xr = transition_kernel(gen, nu, xm, d2)
        tried += 1
        if abs(xr - target) <= half_width:
            out[got] = xm
            got += 1
    return tried


def rejection_bridge_midpoints(seed, params, x_l, x_r, tau_l, tau_m, tau_r, half_width,
                               n_samples):
    """Midpoint values of forward paths whose right end lands near ``x_r``.

    Simulates ``tau_l -> tau_m -> tau_r`` with exact transitions and keeps
    ``X(tau_m)`` whenever ``|X(tau_r) - x_r| <= half_width``.  As the bin
    shrinks this samples the bridge law.

    Returns
    -------
    samples : ndarray
    acceptance : float
    """
    out = np.empty(n_samples)
    tried = _rejection_kernel(RngStream(seed, 0).generator, params.order, float(x_l),
                              float(x_r), float(half_width), float(tau_m - tau_l),
                              float(tau_r - tau_m), out)
    return out, n_samples / tried


def mean_and_stderr(samples):
    s = np.asarray(samples, dtype=float)
    return float(s.mean()), float(s.std(ddof=1) / math.sqrt(s.size))


def variance_and_stderr(samples):
    """Sample variance and its large-sample standard error."""
    s = np.asarray(samples, dtype=float)
    c = s - s.mean()
    var = float(c.var(ddof=1))
    m4 = float(np.mean(c**4))
    return var, math.sqrt(max(m4 - var * var, 0.0) / s.size)
