"""Adaptive estimate of the integrated variance over one step.

Given the BESQ values at both ends of a step, the integral of ``V`` is
replaced by the sum of its conditional expectations over a partition of the
step.  The partition is built by bisection.  A segment is accepted once the
conditional variance of its integral fits in its share of the tolerance.
The estimate is unbiased for any partition (tower property), so the
tolerance only controls how much of the integral's randomness is kept.

Tolerance accounting
--------------------
The root segment starts with budget ``delta0``; bisection splits a segment's
budget equally between its halves.  With the reservoir enabled, a segment is
accepted when ``var < delta + reserve``; it then consumes exactly ``var`` and
the leftover ``delta + reserve - var`` becomes the new reserve for the next
segment.  Unused budget therefore flows to later segments, and
``sum(var) + final reserve == delta0`` up to round-off.  Without the
reservoir the test is simply ``var < delta``.

Segments are processed depth first, left half before right half, so leaves
are visited in time order.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numba import njit

from .besq import BridgeSegment, bridge_kernel, transition_kernel
from .moments import MomentPrecisionError, bridge_moments, variance_kernel
from .samplers import RngStream

__all__ = [
    "RefineSpace",
    "AdaptConfig",
    "IntegralEstimate",
    "BatchEstimates",
    "AdaptDepthError",
    "estimate_integral",
    "estimate_integral_batch",
    "segment_variance",
]

_OK, _DEPTH, _NEG_VAR = 0, 1, 2

#: Runs per random stream in batched estimation.
BATCH_BLOCK = 1024


class RefineSpace(str, Enum):
    """Where segments are bisected: calendar time or BESQ time."""

    T_SPACE = "t_space"
    TAU_SPACE = "tau_space"


@dataclass(frozen=True)
class AdaptConfig:
    """Settings of the adaptive estimator.

    Parameters
    ----------
    delta0 : float
        Total variance budget for the step's integral, > 0.
    max_depth : int, default 40
        Bisection depth at which the estimator gives up.
    refine_space : RefineSpace or str, default "t_space"
        Bisect at the calendar-time or the BESQ-time midpoint.
    reservoir_enabled : bool, default True
        Pass unused budget on to later segments.
    """

    delta0: float
    max_depth: int = 40
    refine_space: RefineSpace = RefineSpace.T_SPACE
    reservoir_enabled: bool = True

    def __post_init__(self):
        if not self.delta0 > 0:
            raise ValueError(f"delta0 must be > 0, got {self.delta0!r}")
        if not (isinstance(self.max_depth, (int, np.integer)) and self.max_depth >= 1):
            raise ValueError(f"max_depth must be a positive integer, got {self.max_depth!r}")
        object.__setattr__(self, "refine_space", RefineSpace(self.refine_space))


@dataclass
class IntegralEstimate:
    """Result of one adaptive estimate.

    Attributes
    ----------
    value : float
        Estimate of the integrated variance over the step.
    leaf_count : int
        Number of accepted segments.
    variance_sum : float
        Sum of the accepted segments' conditional variances.
    reservoir_residual : float
        Budget left in the reserve at the end (0 without the reservoir).
    interior_points : ndarray, shape (leaf_count - 1, 2)
        ``(t, x)`` of every sampled interior point, in generation order.
        Empty unless points were recorded.
    """

    value: float
    leaf_count: int
    variance_sum: float
    reservoir_residual: float
    interior_points: np.ndarray = field(default_factory=lambda: np.empty((0, 2)), repr=False)


@dataclass
class BatchEstimates:
    """Many independent estimates over the same step, one entry per run."""

    x_l: np.ndarray
    x_r: np.ndarray
    value: np.ndarray
    leaf_count: np.ndarray
    variance_sum: np.ndarray
    reservoir_residual: np.ndarray

    def __len__(self):
        return self.value.size


class AdaptDepthError(RuntimeError):
    """Bisection depth exceeded; ``partial`` holds the state reached so far."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


@njit(cache=True)
def adapt_kernel(gen, nu, kappa, sigma_v, t_l, t_r, x_l, x_r, delta0, max_depth,
                 tau_space, reservoir, record):
    """Run the estimator; returns value, leaves, var sum, reserve, status, points."""
    scale = sigma_v * sigma_v / (4.0 * kappa)
    size = max_depth + 2
    s_tl = np.empty(size)
    s_tr = np.empty(size)
    s_ul = np.empty(size)
    s_ur = np.empty(size)
    s_xl = np.empty(size)
    s_xr = np.empty(size)
    s_d = np.empty(size)
    s_depth = np.empty(size, dtype=np.int64)
    cap = 64 if record else 1
    pts = np.empty((cap, 2))
    n_pts = 0

    s_tl[0] = t_l
    s_tr[0] = t_r
    s_ul[0] = scale * math.expm1(kappa * t_l)
    s_ur[0] = scale * math.expm1(kappa * t_r)
    s_xl[0] = x_l
    s_xr[0] = x_r
    s_d[0] = delta0
    s_depth[0] = 0
    sp = 1

    value = 0.0
    var_sum = 0.0
    reserve = 0.0
    leaves = 0
    status = 0
    while sp > 0:
        sp -= 1
        tl = s_tl[sp]
        tr = s_tr[sp]
        ul = s_ul[sp]
        ur = s_ur[sp]
        xl = s_xl[sp]
        xr = s_xr[sp]
        d = s_d[sp]
        depth = s_depth[sp]
        m1, var, ok = variance_kernel(nu, kappa, sigma_v, xl, xr, ul, ur - ul)
        if not ok:
            status = 2
            break
        gap = var - (d + reserve)
        if gap < 0.0:
            value += m1
            var_sum += var
            leaves += 1
            if reservoir:
                reserve = -gap
            continue
        if depth >= max_depth:
            status = 1
            break
        if tau_space:
            um = 0.5 * (ul + ur)
            tm = math.log1p(um / scale) / kappa
        else:
            tm = 0.5 * (tl + tr)
            um = scale * math.expm1(kappa * tm)
        if not (ul < um < ur):
            status = 1
            break
        xm = bridge_kernel(gen, nu, ul, um, ur, xl, xr)
        if record:
            if n_pts == cap:
                grown = np.empty((2 * cap, 2))
                grown[:cap] = pts
                pts = grown
                cap *= 2
            pts[n_pts, 0] = tm
            pts[n_pts, 1] = xm
            n_pts += 1
        half = 0.5 * d
        # right half first so the left half is popped next
        s_tl[sp], s_tr[sp], s_ul[sp], s_ur[sp] = tm, tr, um, ur
        s_xl[sp], s_xr[sp], s_d[sp], s_depth[sp] = xm, xr, half, depth + 1
        sp += 1
        s_tl[sp], s_tr[sp], s_ul[sp], s_ur[sp] = tl, tm, ul, um
        s_xl[sp], s_xr[sp], s_d[sp], s_depth[sp] = xl, xm, half, depth + 1
        sp += 1
    return value, leaves, var_sum, reserve, status, pts[:n_pts]


def _run(gen, params, cfg, t_l, t_r, x_l, x_r, record):
    return adapt_kernel(gen, params.order, params.kappa, params.sigma_v, float(t_l),
                        float(t_r), float(x_l), float(x_r), float(cfg.delta0),
                        int(cfg.max_depth), cfg.refine_space is RefineSpace.TAU_SPACE,
                        bool(cfg.reservoir_enabled), record)


def raise_for_status(status, estimate, where):
    if status == _DEPTH:
        raise AdaptDepthError(f"adaptive estimator exceeded its depth limit {where}", estimate)
    if status == _NEG_VAR:
        raise MomentPrecisionError(f"negative conditional variance beyond round-off {where}")


def estimate_integral(stream, params, cfg, t_l, t_r, x_l, x_r, record_points=True):
    """Adaptive estimate of ``int_{t_l}^{t_r} V dt`` given the BESQ endpoints.

    Parameters
    ----------
    stream : RngStream
        Source of the interior bridge samples.
    params : HestonParams
    cfg : AdaptConfig
    t_l, t_r : float
        Step end points in calendar time, ``0 <= t_l < t_r``.
    x_l, x_r : float
        BESQ values at ``tau(t_l)`` and ``tau(t_r)``.
    record_points : bool, default True
        Keep the sampled interior points in the result.

    Returns
    -------
    IntegralEstimate

    Raises
    ------
    AdaptDepthError
        When a segment still needs splitting at ``cfg.max_depth``.  The
        exception's ``partial`` attribute holds the estimate accumulated up
        to that point.

    Examples
    --------
    >>> from adaptheston import HestonParams, RngStream
    >>> p = HestonParams.benchmark()
    >>> est = estimate_integral(RngStream(7), p, AdaptConfig(1e6), 0.0, 1.0, 0.010201, 5.0)
    >>> est.leaf_count
    1
    """
    if not isinstance(stream, RngStream):
        raise TypeError("stream must be an RngStream")
    if not 0 <= t_l < t_r:
        raise ValueError(f"need 0 <= t_l < t_r, got {t_l!r}, {t_r!r}")
    if not (x_l >= 0 and x_r >= 0):
        raise ValueError("endpoint values must be >= 0")
    value, leaves, var_sum, reserve, status, pts = _run(
        stream.generator, params, cfg, t_l, t_r, x_l, x_r, record_points)
    est = IntegralEstimate(value, int(leaves), var_sum, reserve, pts.copy())
    raise_for_status(status, est, f"on [{t_l}, {t_r}]")
    return est


def segment_variance(params, seg):
    """Conditional variance of the integrated variance over ``seg``.

    Parameters
    ----------
    params : HestonParams
    seg : BridgeSegment
        Endpoints in BESQ time and value; ``seg.delta`` is ignored.

    Returns
    -------
    float
    """
    if not isinstance(seg, BridgeSegment):
        raise TypeError("seg must be a BridgeSegment")
    return bridge_moments(params, seg.x_l, seg.x_r, seg.tau_l, seg.length).var


@njit(cache=True)
def _batch_kernel(gen, nu, kappa, sigma_v, t_l, t_r, x_l, x_r, draw_right, delta0,
                  max_depth, tau_space, reservoir, value, leaves, var_sum, reserve):
    scale = sigma_v * sigma_v / (4.0 * kappa)
    dtau = scale * (math.expm1(kappa * t_r) - math.expm1(kappa * t_l))
    for i in range(value.size):
        if draw_right:
            x_r[i] = transition_kernel(gen, nu, x_l[i], dtau)
        v, nl, vs, res, status, _ = adapt_kernel(gen, nu, kappa, sigma_v, t_l, t_r, x_l[i],
                                                 x_r[i], delta0, max_depth, tau_space,
                                                 reservoir, False)
        if status != 0:
            return i, status
        value[i] = v
        leaves[i] = nl
        var_sum[i] = vs
        reserve[i] = res
    return -1, 0


def estimate_integral_batch(seed, params, cfg, t_l, t_r, x_l, x_r=None, n_runs=None):
    """Independent adaptive estimates for many endpoint pairs.

    Run ``i`` belongs to block ``i // BATCH_BLOCK``, which draws from
    ``RngStream(seed, block)``.

    Parameters
    ----------
    seed : int
    params : HestonParams
    cfg : AdaptConfig
    t_l, t_r : float
        Step end points in calendar time.
    x_l : float or array_like
        Left BESQ values; a scalar is shared by all runs.
    x_r : array_like, optional
        Right BESQ values.  When omitted each run first draws its right end
        by an exact transition from its left end.
    n_runs : int, optional
        Needed only when both ends are scalars or ``x_r`` is drawn from a
        scalar ``x_l``.

    Returns
    -------
    BatchEstimates
    """
    if not 0 <= t_l < t_r:
        raise ValueError(f"need 0 <= t_l < t_r, got {t_l!r}, {t_r!r}")
    x_l = np.atleast_1d(np.asarray(x_l, dtype=float))
    draw_right = x_r is None
    if n_runs is None:
        n_runs = x_l.size if draw_right else np.atleast_1d(x_r).size
    x_l = np.array(np.broadcast_to(x_l, (n_runs,)), dtype=float)
    x_r = (np.empty(n_runs) if draw_right
           else np.array(np.broadcast_to(np.asarray(x_r, dtype=float), (n_runs,))))
    if np.any(x_l < 0) or (not draw_right and np.any(x_r < 0)):
        raise ValueError("endpoint values must be >= 0")
    value = np.empty(n_runs)
    leaves = np.empty(n_runs, dtype=np.int64)
    var_sum = np.empty(n_runs)
    reserve = np.empty(n_runs)
    for b, lo in enumerate(range(0, n_runs, BATCH_BLOCK)):
        hi = min(n_runs, lo + BATCH_BLOCK)
        bad, status = _batch_kernel(
            RngStream(seed, b).generator, params.order, params.kappa, params.sigma_v,
            float(t_l), float(t_r), x_l[lo:hi], x_r[lo:hi], draw_right, float(cfg.delta0),
            int(cfg.max_depth), cfg.refine_space is RefineSpace.TAU_SPACE,
            bool(cfg.reservoir_enabled), value[lo:hi], leaves[lo:hi], var_sum[lo:hi],
            reserve[lo:hi])
        if bad >= 0:
            raise_for_status(status, None, f"in run {lo + bad}")
    return BatchEstimates(x_l, x_r, value, leaves, var_sum, reserve)
