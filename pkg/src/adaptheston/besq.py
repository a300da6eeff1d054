"""Squared Bessel (BESQ) process layer.

The CIR variance ``dV = kappa (theta - V) dt + sigma_v sqrt(V) dW`` is a
space-time changed BESQ process::

    V_t = exp(-kappa t) X(tau(t)),   tau(t) = sigma_v^2 / (4 kappa) (exp(kappa t) - 1),

where ``X`` solves ``dX = lam du + 2 sqrt(X) dW`` with dimension
``lam = 4 kappa theta / sigma_v^2`` and order ``nu = lam/2 - 1``.  In BESQ
time both the forward transition and the bridge (interior value given two
endpoints) are Poisson/Bessel mixtures of gamma laws, which are sampled
exactly here.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .samplers import RngStream, bessel_kernel

__all__ = [
    "HestonParams",
    "TimeMap",
    "BridgeSegment",
    "tau_of_t",
    "t_of_tau",
    "v_of_x",
    "sample_transition",
    "sample_bridge_midvalue",
]


@dataclass(frozen=True)
class HestonParams:
    """Heston model constants.

    Parameters
    ----------
    kappa : float
        Mean-reversion speed (per year), > 0.
    theta : float
        Long-run variance, > 0.
    sigma_v : float
        Volatility of variance (per sqrt year), > 0.
    rho : float
        Correlation between the price and variance drivers, in [-1, 1].
    s0 : float
        Initial price, > 0.
    v0 : float
        Initial variance, >= 0.
    r : float, default 0
        Risk-free rate (per year), used for discounting.
    mu : float, optional
        Drift of the price.  Defaults to ``r`` (risk-neutral pricing).
    """

    kappa: float
    theta: float
    sigma_v: float
    rho: float
    s0: float
    v0: float
    r: float = 0.0
    mu: float = None

    def __post_init__(self):
        if self.mu is None:
            object.__setattr__(self, "mu", self.r)
        checks = (
            (self.kappa > 0, "kappa > 0"),
            (self.theta > 0, "theta > 0"),
            (self.sigma_v > 0, "sigma_v > 0"),
            (abs(self.rho) <= 1, "|rho| <= 1"),
            (self.s0 > 0, "s0 > 0"),
            (self.v0 >= 0, "v0 >= 0"),
            (math.isfinite(self.r) and math.isfinite(self.mu), "finite r and mu"),
        )
        for ok, what in checks:
            if not ok:
                raise ValueError(f"invalid Heston parameters: need {what}")

    @classmethod
    def benchmark(cls):
        """The at-the-money test case used throughout the benchmarks."""
        return cls(kappa=6.21, theta=0.019, sigma_v=0.61, rho=-0.7,
                   s0=100.0, v0=0.010201, r=0.0319)

    @property
    def dimension(self):
        """BESQ dimension ``lam = 4 kappa theta / sigma_v^2``."""
        return 4.0 * self.kappa * self.theta / self.sigma_v**2

    @property
    def order(self):
        """BESQ order ``nu = lam/2 - 1``; the origin is reachable when < 0."""
        return 0.5 * self.dimension - 1.0

    @property
    def time_map(self):
        return TimeMap(self.kappa, self.sigma_v)


@dataclass(frozen=True)
class TimeMap:
    """Bijection between calendar time ``t`` and BESQ time ``tau``."""

    kappa: float
    sigma_v: float
    _scale: float = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.kappa > 0 and self.sigma_v > 0):
            raise ValueError("TimeMap needs kappa > 0 and sigma_v > 0")
        object.__setattr__(self, "_scale", self.sigma_v**2 / (4.0 * self.kappa))

    def tau(self, t):
        return self._scale * np.expm1(self.kappa * np.asarray(t, dtype=float))

    def t(self, u):
        return np.log1p(np.asarray(u, dtype=float) / self._scale) / self.kappa


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def tau_of_t(time_map, t):
    """BESQ time ``sigma_v^2/(4 kappa) (exp(kappa t) - 1)`` of calendar time ``t``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be >= 0")
    return _scalar_or_array(time_map.tau(t))


def t_of_tau(time_map, u):
    """Calendar time ``log(1 + 4 kappa u / sigma_v^2) / kappa`` of BESQ time ``u``."""
    if np.any(np.asarray(u) < 0):
        raise ValueError("u must be >= 0")
    return _scalar_or_array(time_map.t(u))


def v_of_x(time_map, t, x):
    """Variance ``exp(-kappa t) x`` from the BESQ value ``x`` at ``tau(t)``."""
    if np.any(np.asarray(x) < 0):
        raise ValueError("x must be >= 0")
    return _scalar_or_array(np.exp(-time_map.kappa * np.asarray(t, dtype=float)) * x)


@dataclass(frozen=True)
class BridgeSegment:
    """A BESQ-time interval with frozen endpoint values and a tolerance."""

    tau_l: float
    tau_r: float
    x_l: float
    x_r: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.tau_l < self.tau_r:
            raise ValueError(f"need tau_l < tau_r, got {self.tau_l!r}, {self.tau_r!r}")
        if not (self.x_l >= 0 and self.x_r >= 0):
            raise ValueError("endpoint values must be >= 0")
        if not self.delta >= 0:
            raise ValueError("delta must be >= 0")

    @property
    def length(self):
        return self.tau_r - self.tau_l


@njit(cache=True)
def transition_kernel(gen, nu, x, dtau):
    eta = gen.poisson(x / (2.0 * dtau)) if x > 0.0 else 0
    return gen.gamma(nu + eta + 1.0, 2.0 * dtau)


@njit(cache=True)
def bridge_kernel(gen, nu, tau_l, tau_m, tau_r, x_l, x_r):
    dtau = tau_r - tau_l
    dl = tau_m - tau_l
    dr = tau_r - tau_m
    mean1 = ((dr / dl) * x_l + (dl / dr) * x_r) / (2.0 * dtau)
    eta1 = gen.poisson(mean1) if mean1 > 0.0 else 0
    z = math.sqrt(x_l * x_r) / dtau
    eta2 = bessel_kernel(gen, nu, z)
    return gen.gamma(nu + eta1 + 2.0 * eta2 + 1.0, 2.0 * dl * dr / dtau)


@njit(cache=True)
def _fill_transition(gen, nu, x, dtau, out):
    for i in range(out.size):
        out[i] = transition_kernel(gen, nu, x, dtau)


@njit(cache=True)
def _fill_bridge(gen, nu, tau_l, tau_m, tau_r, x_l, x_r, out):
    for i in range(out.size):
        out[i] = bridge_kernel(gen, nu, tau_l, tau_m, tau_r, x_l, x_r)


def _draw(fill, stream, size, *args):
    if not isinstance(stream, RngStream):
        raise TypeError("stream must be an RngStream")
    out = np.empty(1 if size is None else int(np.prod(size)))
    fill(stream.generator, *args, out)
    return float(out[0]) if size is None else out.reshape(size)


def sample_transition(stream, params, x, dtau, size=None):
    """Exact BESQ transition ``X(u + dtau) | X(u) = x``.

    Draws ``eta ~ Poisson(x / (2 dtau))`` and returns a gamma variate with
    shape ``nu + eta + 1`` and scale ``2 dtau``.

    Parameters
    ----------
    stream : RngStream
    params : HestonParams
    x : float
        Current value, >= 0.
    dtau : float
        BESQ-time increment, > 0.
    size : int, optional
        Number of independent draws.

    Returns
    -------
    float or ndarray
        Non-negative; mean ``x + lam dtau``, variance ``4 x dtau + 2 lam dtau^2``.
    """
    if not x >= 0:
        raise ValueError(f"x must be >= 0, got {x!r}")
    if not dtau > 0:
        raise ValueError(f"dtau must be > 0, got {dtau!r}")
    return _draw(_fill_transition, stream, size, params.order, float(x), float(dtau))


def sample_bridge_midvalue(stream, params, seg, tau_m, size=None):
    """Exact interior value of a BESQ bridge.

    With ``dl = tau_m - tau_l``, ``dr = tau_r - tau_m`` and
    ``d = tau_r - tau_l`` this draws::

        eta1 ~ Poisson(((dr/dl) x_l + (dl/dr) x_r) / (2 d))
        eta2 ~ Bessel(nu, sqrt(x_l x_r) / d)

    and returns a gamma variate with shape ``nu + eta1 + 2 eta2 + 1`` and
    scale ``2 dl dr / d``.

    Parameters
    ----------
    stream : RngStream
    params : HestonParams
    seg : BridgeSegment
    tau_m : float
        Strictly inside ``(seg.tau_l, seg.tau_r)``.
    size : int, optional
        Number of independent draws.
    """
    if not seg.tau_l < tau_m < seg.tau_r:
        raise ValueError(f"tau_m={tau_m!r} must lie strictly inside the segment")
    return _draw(_fill_bridge, stream, size, params.order, float(seg.tau_l), float(tau_m),
                 float(seg.tau_r), float(seg.x_l), float(seg.x_r))
