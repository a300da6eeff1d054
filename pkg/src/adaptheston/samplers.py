"""Seedable random variate generators.

Every stochastic routine in the package draws from an :class:`RngStream`, a
``(seed, stream_id)`` pair wrapping a PCG64 generator.  The stream id is the
spawn key of a ``numpy.random.SeedSequence``, so streams with different ids
are statistically independent and a given pair always reproduces the same
sequence.  Simulations split their paths into fixed-size blocks and give
block ``b`` the stream id ``b``; results then do not depend on how blocks are
scheduled across workers.

Gamma, Poisson and normal variates come from numpy's generator (Marsaglia and
Tsang for gamma, including shape < 1; PTRS for large Poisson means).  The
Bessel distribution is sampled here by exact inversion started at the mode.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import gammaln

from .specfun import (
    bessel_mode,
    check_order,
    hankel_threshold,
    log_i_kernel,
    log_series_term,
)

__all__ = [
    "RngStream",
    "BesselDistParams",
    "sample_gamma",
    "sample_poisson",
    "sample_bessel",
    "sample_normal",
    "bessel_pmf",
]

_U64 = 2**64


@dataclass
class RngStream:
    """A reproducible substream of random numbers.

    Parameters
    ----------
    seed : int
        Master seed, ``0 <= seed < 2**64``.
    stream_id : int, default 0
        Substream selector, ``0 <= stream_id < 2**64``.

    Attributes
    ----------
    generator : numpy.random.Generator
        The underlying PCG64 generator.  It is stateful: drawing from it
        advances the stream.
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= value < _U64:
                raise ValueError(f"{name} must be an integer in [0, 2**64), got {value!r}")
        self.seed = int(self.seed)
        self.stream_id = int(self.stream_id)
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def spawn(self, stream_id):
        """Fresh stream with the same seed and a different id."""
        return RngStream(self.seed, stream_id)


@dataclass(frozen=True)
class BesselDistParams:
    """Parameters of the Bessel distribution ``B(nu, z)``.

    Its pmf is ``p_n = (z/2)^(2n+nu) / (n! Gamma(n+nu+1) I_nu(z))``.
    """

    nu: float
    z: float

    def __post_init__(self):
        check_order(self.nu)
        if not self.z >= 0.0:
            raise ValueError(f"Bessel distribution needs z >= 0, got {self.z!r}")

    @property
    def mode(self):
        return bessel_mode(self.nu, self.z) if self.z > 0 else 0


@njit(cache=True)
def _mass_relative_to_mode(nu, q, m):
    # sum_n p_n / p_m, accumulated outward from the mode
    total = 1.0
    t = 1.0
    n = m
    while t >= 1e-17 * total:
        t *= q / ((n + 1.0) * (n + 1.0 + nu))
        total += t
        n += 1
    t = 1.0
    n = m
    while n > 0 and t >= 1e-17 * total:
        t *= n * (n + nu) / q
        total += t
        n -= 1
    return total


@njit(cache=True)
def bessel_mode_probability(nu, z):
    """Probability of the mode of ``B(nu, z)``, for ``z > 0``."""
    m = bessel_mode(nu, z)
    if z <= hankel_threshold(nu):
        return 1.0 / _mass_relative_to_mode(nu, 0.25 * z * z, m)
    return math.exp(log_series_term(nu, z, m) - log_i_kernel(nu, z))


@njit(cache=True)
def bessel_kernel(gen, nu, z):
    # Inversion with the search started at the mode and alternating outward,
    # so the expected work is O(standard deviation) = O(sqrt(z)).
    if z == 0.0:
        return 0
    m = bessel_mode(nu, z)
    q = 0.25 * z * z
    p_mode = bessel_mode_probability(nu, z)
    while True:
        u = gen.random()
        if u <= p_mode:
            return m
        u -= p_mode
        hi = m
        lo = m
        p_hi = p_mode
        p_lo = p_mode
        while True:
            p_hi *= q / ((hi + 1.0) * (hi + 1.0 + nu))
            hi += 1
            if u <= p_hi:
                return hi
            u -= p_hi
            if lo > 0:
                p_lo *= lo * (lo + nu) / q
                lo -= 1
                if u <= p_lo:
                    return lo
                u -= p_lo
            elif p_hi < 1e-300:
                # u landed in the rounding slack of the cdf; redraw
                break


@njit(cache=True)
def _fill_bessel(gen, nu, z, out):
    for i in range(out.size):
        out[i] = bessel_kernel(gen, nu, z)


def _check_stream(stream):
    if not isinstance(stream, RngStream):
        raise TypeError(f"expected an RngStream, got {type(stream).__name__}")


def sample_gamma(stream, shape, scale, size=None):
    """Gamma variate with the given shape and scale.

    Parameters
    ----------
    stream : RngStream
    shape, scale : float
        Both strictly positive.  Any shape > 0 is accepted.
    size : int or tuple, optional
        Number of independent draws; a scalar is returned when omitted.

    Returns
    -------
    float or ndarray
        Mean ``shape * scale``, variance ``shape * scale**2``.
    """
    _check_stream(stream)
    if not (shape > 0.0 and scale > 0.0):
        raise ValueError(f"gamma needs shape > 0 and scale > 0, got {shape!r}, {scale!r}")
    return stream.generator.gamma(shape, scale, size=size)


def sample_poisson(stream, mean, size=None):
    """Poisson variate with the given mean (zero mean gives 0 surely)."""
    _check_stream(stream)
    if not mean >= 0.0:
        raise ValueError(f"Poisson mean must be >= 0, got {mean!r}")
    return stream.generator.poisson(mean, size=size)


def sample_normal(stream, size=None):
    """Standard normal variate."""
    _check_stream(stream)
    return stream.generator.standard_normal(size=size)


def sample_bessel(stream, params, size=None):
    """Bessel-distributed integer ``B(nu, z)``.

    Parameters
    ----------
    stream : RngStream
    params : BesselDistParams
    size : int, optional
        Number of independent draws; a scalar is returned when omitted.

    Returns
    -------
    int or ndarray of int64

    Notes
    -----
    Exact inversion.  The cdf search starts at the mode
    ``floor((sqrt(nu^2 + z^2) - nu)/2)`` and steps alternately up and down
    using ``p_{n+1}/p_n = (z/2)^2 / ((n+1)(n+1+nu))``.  The mode probability
    is normalised with :func:`~adaptheston.specfun.log_modified_bessel_i`.
    """
    _check_stream(stream)
    if not isinstance(params, BesselDistParams):
        raise TypeError("params must be a BesselDistParams")
    if size is None:
        return int(bessel_kernel(stream.generator, float(params.nu), float(params.z)))
    out = np.empty(int(np.prod(size)), dtype=np.int64)
    _fill_bessel(stream.generator, float(params.nu), float(params.z), out)
    return out.reshape(size)


def bessel_pmf(params, n):
    """Probability mass ``p_n`` of ``B(nu, z)`` at integer(s) ``n``."""
    n = np.asarray(n)
    if params.z == 0.0:
        return (n == 0).astype(float)
    log_i = log_i_kernel(float(params.nu), float(params.z))
    logp = ((2 * n + params.nu) * (np.log(params.z) - np.log(2.0))
            - gammaln(n + 1.0) - gammaln(n + params.nu + 1.0) - log_i)
    return np.exp(logp)
