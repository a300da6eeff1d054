"""Heston path simulation and European call pricing.

Exact scheme
------------
Over a step ``[t, t + dt]`` the variance endpoint is an exact BESQ
transition.  ``I = int V ds`` is estimated adaptively between the two
endpoints.  The correlated part of the price noise is then recovered from
the variance dynamics, with no further discretisation::

    int sqrt(V) dW1 = (V(t+dt) - V(t) - kappa theta dt + kappa I) / sigma_v
    S(t+dt) = S(t) exp(mu dt - I/2 + rho int sqrt(V) dW1 + sqrt((1 - rho^2) I) Z)

with ``Z`` standard normal.  Pricing uses ``mu = r``.

Baseline scheme
---------------
An Euler step with full truncation for ``V`` and predictor-corrector
averaging of the log-price coefficients.  The drift is corrected by
``-rho sigma_v / 4`` so the averaged diffusion stays consistent with Ito
calculus.

Random streams
--------------
Paths are grouped in consecutive blocks of ``PATH_BLOCK``; block ``b`` of a
run with seed ``s`` draws from ``RngStream(s, b)``, path after path.  A
path's draws therefore depend only on ``(s, path index)``.  They do not
depend on the total path count or on how blocks are spread over worker
processes.
"""

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numba import njit

from .adapt import IntegralEstimate, RefineSpace, adapt_kernel, raise_for_status
from .besq import transition_kernel
from .samplers import RngStream

__all__ = [
    "PATH_BLOCK",
    "Scheme",
    "PathState",
    "StepResult",
    "PriceResult",
    "step_exact",
    "step_predictor_corrector",
    "simulate_terminal",
    "price_european_call",
]


#: Paths per random stream.
PATH_BLOCK = 1024


class Scheme(str, Enum):
    """Path simulation schemes."""

    EXACT = "exact"
    PREDICTOR_CORRECTOR = "predictor_corrector"


@dataclass(frozen=True)
class PathState:
    """Time, price, variance and BESQ value ``x = exp(kappa t) v``."""

    t: float
    s: float
    v: float
    x: float

    @classmethod
    def initial(cls, params, t=0.0):
        return cls(t, params.s0, params.v0, math.exp(params.kappa * t) * params.v0)


@dataclass(frozen=True)
class StepResult:
    """Integrated variance, recovered stochastic integral and estimator output."""

    integral_v: float
    int_sqrtv_dw1: float
    estimate: IntegralEstimate


@dataclass(frozen=True)
class PriceResult:
    """Monte Carlo price with its standard error.

    ``timing`` is wall-clock seconds for the simulation.  ``mean_leaf_count``
    is the average number of accepted segments per path and step (exact
    scheme only, NaN otherwise).
    """

    price: float
    stderr: float
    timing: float
    n_paths: int
    mean_leaf_count: float = float("nan")
    payoffs: np.ndarray = field(default=None, repr=False, compare=False)

    def __iter__(self):
        return iter((self.price, self.stderr, self.timing))


# ---------------------------------------------------------------------------
# Kernels


@njit(cache=True)
def exact_path_kernel(gen, nu, kappa, theta, sigma_v, rho, mu, s0, v0, dates, deltas,
                      max_depth, tau_space, reservoir):
    """Log terminal price, terminal variance, total leaves and status."""
    scale = sigma_v * sigma_v / (4.0 * kappa)
    log_s = math.log(s0)
    x = math.exp(kappa * dates[0]) * v0
    leaves = 0
    v_end = v0
    cross = math.sqrt(1.0 - rho * rho)
    for j in range(dates.size - 1):
        t0 = dates[j]
        t1 = dates[j + 1]
        dt = t1 - t0
        u0 = scale * math.expm1(kappa * t0)
        u1 = scale * math.expm1(kappa * t1)
        x1 = transition_kernel(gen, nu, x, u1 - u0)
        value, nleaf, _, _, status, _ = adapt_kernel(
            gen, nu, kappa, sigma_v, t0, t1, x, x1, deltas[j], max_depth, tau_space,
            reservoir, False)
        if status != 0:
            return log_s, v_end, leaves, status
        leaves += nleaf
        v_start = math.exp(-kappa * t0) * x
        v_end = math.exp(-kappa * t1) * x1
        w1 = (v_end - v_start - kappa * theta * dt + kappa * value) / sigma_v
        z = gen.standard_normal()
        log_s += mu * dt - 0.5 * value + rho * w1 + cross * math.sqrt(value) * z
        x = x1
    return log_s, v_end, leaves, 0


@njit(cache=True)
def exact_paths_kernel(gen, nu, kappa, theta, sigma_v, rho, mu, s0, v0, dates, deltas,
                       max_depth, tau_space, reservoir, log_s, v_t, leaves):
    """Fill the output arrays path by path; returns the first failing index or -1."""
    for i in range(log_s.size):
        ls, vt, nl, status = exact_path_kernel(gen, nu, kappa, theta, sigma_v, rho, mu, s0,
                                               v0, dates, deltas, max_depth, tau_space,
                                               reservoir)
        if status != 0:
            return i, status
        log_s[i] = ls
        v_t[i] = vt
        leaves[i] = nl
    return -1, 0


@njit(cache=True)
def pc_step_kernel(gen, kappa, theta, sigma_v, rho, mu, log_s, v, dt):
    z1 = gen.standard_normal()
    z2 = gen.standard_normal()
    vp = v if v > 0.0 else 0.0
    sq = math.sqrt(dt)
    v_new = v + kappa * (theta - vp) * dt + sigma_v * math.sqrt(vp) * sq * z1
    if v_new < 0.0:
        v_new = 0.0
    zs = rho * z1 + math.sqrt(1.0 - rho * rho) * z2
    drift = mu - 0.25 * (vp + v_new) - 0.25 * rho * sigma_v
    log_s += drift * dt + 0.5 * (math.sqrt(vp) + math.sqrt(v_new)) * sq * zs
    return log_s, v_new


@njit(cache=True)
def pc_path_kernel(gen, kappa, theta, sigma_v, rho, mu, s0, v0, dates, substeps):
    log_s = math.log(s0)
    v = v0
    for j in range(dates.size - 1):
        h = (dates[j + 1] - dates[j]) / substeps
        for _ in range(substeps):
            log_s, v = pc_step_kernel(gen, kappa, theta, sigma_v, rho, mu, log_s, v, h)
    return log_s, v


@njit(cache=True)
def pc_paths_kernel(gen, kappa, theta, sigma_v, rho, mu, s0, v0, dates, substeps, log_s, v_t):
    for i in range(log_s.size):
        log_s[i], v_t[i] = pc_path_kernel(gen, kappa, theta, sigma_v, rho, mu, s0, v0,
                                          dates, substeps)


# ---------------------------------------------------------------------------
# Single steps


def step_exact(stream, params, cfg, state, dt):
    """Advance one step with the exact-transition scheme.

    Parameters
    ----------
    stream : RngStream
    params : HestonParams
    cfg : AdaptConfig
        Settings for the integrated-variance estimate over this step.
    state : PathState
    dt : float
        Step length, > 0.

    Returns
    -------
    (PathState, StepResult)
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    gen = stream.generator
    nu, kappa = params.order, params.kappa
    tm = params.time_map
    t1 = state.t + dt
    dtau = float(tm.tau(t1) - tm.tau(state.t))
    x1 = transition_kernel(gen, nu, state.x, dtau)
    value, leaves, var_sum, reserve, status, pts = adapt_kernel(
        gen, nu, kappa, params.sigma_v, state.t, t1, state.x, x1, float(cfg.delta0),
        int(cfg.max_depth), cfg.refine_space is RefineSpace.TAU_SPACE,
        bool(cfg.reservoir_enabled), True)
    est = IntegralEstimate(value, int(leaves), var_sum, reserve, pts.copy())
    raise_for_status(status, est, f"on [{state.t}, {t1}]")
    v1 = math.exp(-kappa * t1) * x1
    w1 = (v1 - state.v - kappa * params.theta * dt + kappa * value) / params.sigma_v
    z = gen.standard_normal()
    log_ret = (params.mu * dt - 0.5 * value + params.rho * w1
               + math.sqrt((1.0 - params.rho**2) * value) * z)
    new = PathState(t1, state.s * math.exp(log_ret), v1, x1)
    return new, StepResult(value, w1, est)


def step_predictor_corrector(stream, params, state, dt):
    """Advance one step with the truncated Euler / predictor-corrector baseline.

    ``V`` takes an Euler step with full truncation (``V+`` in drift and
    diffusion) and is floored at 0.  ``log S`` averages its drift and
    diffusion coefficients between the current and the new variance, with
    the drift corrected by ``-rho sigma_v / 4``.

    Returns
    -------
    PathState
        The BESQ field ``x`` is kept consistent with the new variance.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    log_s, v = pc_step_kernel(stream.generator, params.kappa, params.theta, params.sigma_v,
                              params.rho, params.mu, math.log(state.s), state.v, float(dt))
    t1 = state.t + dt
    return PathState(t1, math.exp(log_s), v, math.exp(params.kappa * t1) * v)


# ---------------------------------------------------------------------------
# Whole paths


def _reset_grid(maturity, reset_dates):
    if reset_dates is None:
        return np.array([0.0, float(maturity)])
    dates = np.asarray(reset_dates, dtype=float)
    if dates[0] != 0.0:
        dates = np.concatenate([[0.0], dates])
    if dates[-1] != maturity:
        dates = np.concatenate([dates, [float(maturity)]])
    if np.any(np.diff(dates) <= 0):
        raise ValueError("reset dates must be strictly increasing within (0, maturity]")
    return dates


def _simulate_blocks(args):
    (seed, first_block, n_blocks, n_paths, params, cfg, dates, scheme, substeps) = args
    lo = first_block * PATH_BLOCK
    hi = min(n_paths, (first_block + n_blocks) * PATH_BLOCK)
    log_s = np.empty(hi - lo)
    v_t = np.empty(hi - lo)
    leaves = np.zeros(hi - lo, dtype=np.int64)
    p = params
    for b in range(first_block, first_block + n_blocks):
        a, c = b * PATH_BLOCK - lo, min(hi, (b + 1) * PATH_BLOCK) - lo
        gen = RngStream(seed, b).generator
        if scheme is Scheme.EXACT:
            deltas = cfg.delta0 * np.diff(dates) / (dates[-1] - dates[0])
            bad, status = exact_paths_kernel(
                gen, p.order, p.kappa, p.theta, p.sigma_v, p.rho, p.mu, p.s0, p.v0, dates,
                deltas, int(cfg.max_depth), cfg.refine_space is RefineSpace.TAU_SPACE,
                bool(cfg.reservoir_enabled), log_s[a:c], v_t[a:c], leaves[a:c])
            if bad >= 0:
                raise_for_status(status, None, f"on path {lo + a + bad}")
        else:
            pc_paths_kernel(gen, p.kappa, p.theta, p.sigma_v, p.rho, p.mu, p.s0, p.v0, dates,
                            int(substeps), log_s[a:c], v_t[a:c])
    return log_s, v_t, leaves


def _seed_of(stream):
    if isinstance(stream, RngStream):
        return stream.seed
    return RngStream(int(stream)).seed


def simulate_terminal(stream, params, cfg, maturity, n_paths, scheme=Scheme.EXACT,
                      substeps=None, reset_dates=None, workers=1):
    """Simulate ``n_paths`` terminal states.

    Parameters
    ----------
    stream : RngStream or int
        Only the seed is used; block ``b`` of ``PATH_BLOCK`` paths draws from
        ``RngStream(seed, b)``.
    params : HestonParams
    cfg : AdaptConfig or None
        Required for the exact scheme; its ``delta0`` is shared between
        steps in proportion to their length.
    maturity : float
    n_paths : int
    scheme : Scheme or str
    substeps : int, optional
        Baseline-scheme substeps per reset interval.
    reset_dates : sequence of float, optional
        Dates at which the path is stepped; ``[0, maturity]`` by default.
    workers : int, default 1
        Worker processes; results do not depend on this.

    Returns
    -------
    log_s, v_t, leaves : ndarray
        Log terminal price, terminal variance and, for the exact scheme,
        total accepted segments per path.
    """
    scheme = Scheme(scheme)
    if not maturity > 0:
        raise ValueError("maturity must be > 0")
    if not (isinstance(n_paths, (int, np.integer)) and n_paths >= 1):
        raise ValueError("n_paths must be a positive integer")
    if scheme is Scheme.EXACT:
        if cfg is None:
            raise ValueError("the exact scheme needs an AdaptConfig")
        if params.kappa * maturity > 600:
            raise ValueError("kappa * maturity too large for the BESQ time change")
    elif not (substeps and substeps >= 1):
        raise ValueError("the baseline scheme needs substeps >= 1")
    dates = _reset_grid(maturity, reset_dates)
    seed = _seed_of(stream)
    workers = max(1, int(workers))
    total_blocks = -(-n_paths // PATH_BLOCK)
    n_jobs = min(total_blocks, workers)
    edges = np.linspace(0, total_blocks, n_jobs + 1).astype(int)
    jobs = [(seed, int(a), int(b - a), n_paths, params, cfg, dates, scheme, substeps)
            for a, b in zip(edges[:-1], edges[1:])]
    if n_jobs == 1:
        parts = [_simulate_blocks(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(_simulate_blocks, jobs))
    return tuple(np.concatenate(arrs) for arrs in zip(*parts))


def price_european_call(stream, params, cfg, strike, maturity, n_paths,
                        scheme=Scheme.EXACT, substeps=None, reset_dates=None, workers=1,
                        keep_payoffs=False):
    """Monte Carlo price of a European call.

    Parameters
    ----------
    stream : RngStream or int
        Seed source (see :func:`simulate_terminal` for the stream layout).
    params : HestonParams
    cfg : AdaptConfig or None
        Estimator settings (exact scheme).
    strike : float
        Strike, >= 0 (0 prices the forward).
    maturity : float
        In years.
    n_paths : int
    scheme : {"exact", "predictor_corrector"}
    substeps : int, optional
        Baseline substeps per reset interval.
    reset_dates : sequence of float, optional
    workers : int, default 1
    keep_payoffs : bool, default False
        Attach the discounted payoffs to the result.

    Returns
    -------
    PriceResult
        Unpacks as ``(price, stderr, timing)``.

    Examples
    --------
    >>> from adaptheston import HestonParams, AdaptConfig
    >>> res = price_european_call(1, HestonParams.benchmark(), AdaptConfig(1e-4),
    ...                           100.0, 1.0, 200)
    >>> res.n_paths
    200
    """
    if not strike >= 0:
        raise ValueError("strike must be >= 0")
    start = time.perf_counter()
    log_s, _, leaves = simulate_terminal(stream, params, cfg, maturity, n_paths, scheme,
                                         substeps, reset_dates, workers)
    elapsed = time.perf_counter() - start
    disc = math.exp(-params.r * maturity)
    payoff = disc * np.maximum(np.exp(log_s) - strike, 0.0)
    stderr = payoff.std(ddof=1) / math.sqrt(n_paths) if n_paths > 1 else float("nan")
    steps = len(_reset_grid(maturity, reset_dates)) - 1
    mean_leaves = leaves.mean() / steps if Scheme(scheme) is Scheme.EXACT else float("nan")
    return PriceResult(float(payoff.mean()), float(stderr), elapsed, int(n_paths),
                       float(mean_leaves), payoff if keep_payoffs else None)


def default_workers():
    """Worker count suggested by the machine (at least 1)."""
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity")
               else os.cpu_count() or 1)
