"""Conditional moments of the weighted BESQ bridge integral.

Over one step, the integrated CIR variance equals a weighted BESQ integral::

    int V dt = int X(u) w0(u) du,   w0(u) = a0 (1 + c u)^-2,
    a0 = 4 / sigma_v^2,  c = 4 kappa / sigma_v^2.

On a segment ``[tau_l, tau_l + tau]`` with frozen endpoints ``X = x`` and
``X = y``, the first two conditional moments of that integral have closed
forms.  They involve six coefficients ``A1, A2, B1, B2, C1, C2`` that depend
only on the segment geometry::

    A = 8 tau^2 / sigma_v^2,   b = 1 + 4 kappa tau_l / sigma_v^2,
    c = 4 kappa tau / sigma_v^2,   e = c / b,

and the Bessel quotient ``R_nu(sqrt(xy)/tau)``.  Each coefficient is
``A/b^2`` (first order) or ``A^2/b^4`` (second order) times a function of
``e`` alone.  Those functions are differences of nearly equal terms when
``e`` is small.  There they are evaluated from their exact power series,
whose rational coefficients are generated once at import.

The Laplace transform of the same integral, assembled from a boundary-value
problem with a closed-form solution, is provided as an independent check on
the moments.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numba import njit
from scipy.integrate import quad, solve_ivp

from .specfun import log_i_kernel, quotient_kernel

__all__ = [
    "WeightParams",
    "MomentCoefficients",
    "BridgeMoments",
    "MomentPrecisionError",
    "coefficients",
    "bridge_moments",
    "laplace_transform",
    "phi_quantities",
    "integral_inverse_phi_sq_expanded",
    "solve_phi_numeric",
    "laplace_moments_fd",
    "SERIES_SWITCH",
]

#: Below this value of ``e = c/b`` coefficients come from their power series.
SERIES_SWITCH = 0.25
_SERIES_TERMS = 40
_NEG_VAR_TOL = 1e-12


class MomentPrecisionError(ArithmeticError):
    """Conditional variance came out negative beyond round-off."""


# ---------------------------------------------------------------------------
# Coefficient functions of e = c/b


class _Series:
    """Truncated power series in ``e`` with exact rational coefficients."""

    def __init__(self, coef, n):
        self.n = n
        self.c = (list(coef) + [Fraction(0)] * n)[:n]

    @classmethod
    def const(cls, value, n):
        return cls([Fraction(value)], n)

    @classmethod
    def poly(cls, coefs, n):
        return cls([Fraction(v) for v in coefs], n)

    def __add__(self, other):
        return _Series([a + b for a, b in zip(self.c, other.c)], self.n)

    def __sub__(self, other):
        return _Series([a - b for a, b in zip(self.c, other.c)], self.n)

    def __mul__(self, other):
        if not isinstance(other, _Series):
            return _Series([a * Fraction(other) for a in self.c], self.n)
        out = [Fraction(0)] * self.n
        for i, a in enumerate(self.c):
            if a:
                for j in range(self.n - i):
                    out[i + j] += a * other.c[j]
        return _Series(out, self.n)

    __rmul__ = __mul__

    def shift_down(self, k):
        """Divide by ``e**k``; the dropped low-order terms must vanish."""
        if any(self.c[:k]):
            raise ArithmeticError("series does not vanish to the requested order")
        return _Series(self.c[k:], self.n - k)


def _coefficient_series(terms):
    n = terms + 6
    one_plus_e = _Series.poly([1, 1], n)
    log1p = _Series([Fraction(0)] + [Fraction((-1) ** (k + 1), k) for k in range(1, n)], n)
    inv = _Series([Fraction((-1) ** k) for k in range(n)], n)
    inv2 = inv * inv
    e = _Series.poly([0, 1], n)
    l2 = log1p * log1p
    opes = one_plus_e * one_plus_e
    a1 = (log1p * one_plus_e - e).shift_down(2) * inv * -1
    a2 = (l2 * opes + 6 * log1p * one_plus_e - _Series.poly([0, 6, 4], n)).shift_down(4) * inv2
    a2 = a2 * Fraction(1, 2)
    b1 = (2 * log1p * opes - _Series.poly([0, 2, 3], n)).shift_down(3) * inv
    b2 = (2 * l2 * opes - log1p * _Series.poly([6, 16, 8], n)
          + _Series.poly([0, 6, 11], n)).shift_down(5) * inv
    c1 = -1 * inv
    c2 = (-2 * log1p * one_plus_e + _Series.poly([0, 2, 1], n)).shift_down(3) * inv2
    return {name: s.c[:terms] for name, s in
            dict(A1=a1, A2=a2, B1=b1, B2=b2, C1=c1, C2=c2).items()}


#: Exact leading coefficients, keyed by name; the first entries are the
#: small-segment limits (e.g. ``A1 -> -A/(2 b^2)``).
COEFFICIENT_SERIES = _coefficient_series(_SERIES_TERMS)
_SERIES_TABLE = np.array([[float(v) for v in COEFFICIENT_SERIES[k]]
                          for k in ("A1", "A2", "B1", "B2", "C1", "C2")])


@njit(cache=True)
def _horner(row, e, n):
    acc = 0.0
    for k in range(n - 1, -1, -1):
        acc = acc * e + row[k]
    return acc


@njit(cache=True)
def _series_length(e):
    # terms needed for the dropped tail to stay below 1e-18
    if e < 1e-4:
        return 6
    if e < 1e-3:
        return 8
    if e < 1e-2:
        return 11
    if e < 0.05:
        return 17
    if e < 0.1:
        return 21
    return 34


@njit(cache=True)
def normalized_coefficients(e):
    """``(A1, A2, B1, B2, C1, C2)`` in units of ``A/b^2`` and ``A^2/b^4``."""
    if e < SERIES_SWITCH:
        t = _SERIES_TABLE
        n = _series_length(e)
        return (_horner(t[0], e, n), _horner(t[1], e, n), _horner(t[2], e, n),
                _horner(t[3], e, n), _horner(t[4], e, n), _horner(t[5], e, n))
    lg = math.log1p(e)
    ope = 1.0 + e
    e2 = e * e
    a1 = -(lg * ope - e) / (e2 * ope)
    a2 = (lg * lg * ope * ope + 6.0 * lg * ope - 4.0 * e2 - 6.0 * e) / (2.0 * e2 * e2 * ope * ope)
    b1 = (2.0 * lg * ope * ope - 3.0 * e2 - 2.0 * e) / (e2 * e * ope)
    b2 = (2.0 * lg * lg * ope * ope - lg * (8.0 * e2 + 16.0 * e + 6.0)
          + 11.0 * e2 + 6.0 * e) / (e2 * e2 * e * ope)
    c1 = -1.0 / ope
    c2 = (-2.0 * lg * ope + e2 + 2.0 * e) / (e2 * e * ope * ope)
    return a1, a2, b1, b2, c1, c2


@njit(cache=True)
def coefficient_kernel(kappa, sigma_v, tau_l, tau):
    s2 = sigma_v * sigma_v
    big_a = 8.0 * tau * tau / s2
    b = 1.0 + 4.0 * kappa * tau_l / s2
    c = 4.0 * kappa * tau / s2
    a1, a2, b1, b2, c1, c2 = normalized_coefficients(c / b)
    one = big_a / (b * b)
    two = one * one
    return big_a, b, c, a1 * one, a2 * two, b1 * one, b2 * two, c1 * one, c2 * two


@njit(cache=True)
def moments_kernel(nu, kappa, sigma_v, x, y, tau_l, tau):
    """First and second conditional moments of the weighted bridge integral."""
    _, _, _, a1, a2, b1, b2, c1, c2 = coefficient_kernel(kappa, sigma_v, tau_l, tau)
    s = math.sqrt(x * y) / tau
    sr = s * quotient_kernel(nu, s)
    p = a1 + b1
    k = nu + 1.0 + sr
    q = (b1 + c1) * x + (2.0 * a1 + b1) * y
    qt = q / tau
    m1 = p * k - 0.5 * qt
    d = a1 * a1 + b1 * b1 + a1 * b1 - a2 - b2
    p2 = p * p
    m2 = (2.0 * d
          + (a1 * a1 + b1 * b1 + 2.0 * p2 - 2.0 * a2 - 2.0 * b2) * nu
          + p2 * nu * nu
          + 0.25 * qt * qt
          + ((b2 + c2 - b1 * b1) * x
             - (3.0 * a1 * a1 + b1 * b1 + 2.0 * a1 * b1 - 2.0 * a2 - b2) * y) / tau
          + p2 * s * s
          + (p2 + 2.0 * d) * sr
          - qt * p * k)
    return m1, m2


@njit(cache=True)
def variance_kernel(nu, kappa, sigma_v, x, y, tau_l, tau):
    """``(m1, var, ok)``; ``ok`` is False when var < -1e-12 m2."""
    m1, m2 = moments_kernel(nu, kappa, sigma_v, x, y, tau_l, tau)
    var = m2 - m1 * m1
    if var < 0.0:
        if var < -_NEG_VAR_TOL * m2:
            return m1, var, False
        var = 0.0
    return m1, var, True


# ---------------------------------------------------------------------------
# Public dataclasses and wrappers


@dataclass(frozen=True)
class WeightParams:
    """Weights turning the BESQ integral into the integrated variance.

    ``w0(u) = a0 (1 + c u)^-2`` acts on absolute BESQ time, and
    ``w(u) = a1 (b1 + c1 u)^-2`` on time measured from ``tau_l``.
    """

    a0: float
    c: float
    a1: float
    b1: float
    c1: float
    tau_l: float

    @classmethod
    def from_params(cls, params, tau_l=0.0):
        s2 = params.sigma_v**2
        return cls(a0=4.0 / s2, c=4.0 * params.kappa / s2, a1=4.0 / s2,
                   b1=1.0 + 4.0 * params.kappa * tau_l / s2,
                   c1=4.0 * params.kappa / s2, tau_l=float(tau_l))

    def w0(self, u):
        return self.a0 / (1.0 + self.c * np.asarray(u)) ** 2

    def w(self, u):
        return self.a1 / (self.b1 + self.c1 * np.asarray(u)) ** 2


@dataclass(frozen=True)
class MomentCoefficients:
    """Segment coefficients of the moment formulas.

    ``A = 8 tau^2 / sigma_v^2``, ``b = 1 + 4 kappa tau_l / sigma_v^2`` and
    ``c = 4 kappa tau / sigma_v^2``.  The Laplace constant for transform
    argument ``s`` is ``a = s A`` (see :meth:`laplace_a`).
    """

    A: float
    b: float
    c: float
    A1: float
    A2: float
    B1: float
    B2: float
    C1: float
    C2: float

    def laplace_a(self, theta):
        return theta * self.A

    def as_dict(self):
        return dict(A1=self.A1, A2=self.A2, B1=self.B1, B2=self.B2, C1=self.C1, C2=self.C2)


@dataclass(frozen=True)
class BridgeMoments:
    """Conditional moments of ``int X w du`` given both endpoints."""

    m1: float
    m2: float
    var: float


def _check_segment(x, y, tau):
    if not (x >= 0 and y >= 0):
        raise ValueError("endpoint values must be >= 0")
    if not tau > 0:
        raise ValueError(f"segment length must be > 0, got {tau!r}")


def coefficients(params, tau_l, tau):
    """Coefficients ``A1 .. C2`` for the segment ``[tau_l, tau_l + tau]``.

    Parameters
    ----------
    params : HestonParams
    tau_l : float
        Left end in BESQ time, >= 0.
    tau : float
        Segment length in BESQ time, > 0.

    Returns
    -------
    MomentCoefficients

    Notes
    -----
    With ``e = c/b`` and ``l = log(1 + e)`` the closed forms are::

        A1 = -A/b^2 (l(1+e) - e) / (e^2 (1+e))
        B1 =  A/b^2 (2 l (1+e)^2 - 3e^2 - 2e) / (e^3 (1+e))
        C1 = -A/(b (b+c))
        A2 =  A^2/b^4 (l^2 (1+e)^2 + 6 l (1+e) - 4e^2 - 6e) / (2 e^4 (1+e)^2)
        B2 =  A^2/b^4 (2 l^2 (1+e)^2 - l (8e^2 + 16e + 6) + 11e^2 + 6e) / (e^5 (1+e))
        C2 =  A^2/b^4 (e^2 + 2e - 2 l (1+e)) / (e^3 (1+e)^2)

    For ``e < SERIES_SWITCH`` the same functions are summed from their exact
    Taylor series (at most 34 terms), which avoids the cancellation.
    """
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau!r}")
    if not tau_l >= 0:
        raise ValueError(f"tau_l must be >= 0, got {tau_l!r}")
    vals = coefficient_kernel(params.kappa, params.sigma_v, float(tau_l), float(tau))
    return MomentCoefficients(*vals)


def bridge_moments(params, x, y, tau_l, tau):
    """Conditional mean and variance of the integrated variance on a segment.

    Parameters
    ----------
    params : HestonParams
    x, y : float
        BESQ values at ``tau_l`` and ``tau_l + tau``.
    tau_l : float
        Left end of the segment in BESQ time.
    tau : float
        Segment length in BESQ time, > 0.

    Returns
    -------
    BridgeMoments

    Raises
    ------
    MomentPrecisionError
        If the variance is negative beyond ``1e-12 * m2``.  Smaller negative
        round-off is clamped to zero.

    Notes
    -----
    With ``P = A1 + B1``, ``s = sqrt(xy)/tau``, ``R = R_nu(s)``,
    ``K = nu + 1 + s R`` and ``Q = (B1 + C1) x + (2 A1 + B1) y``::

        m1 = P K - Q / (2 tau)
    """
    _check_segment(x, y, tau)
    m1, m2 = moments_kernel(params.order, params.kappa, params.sigma_v,
                            float(x), float(y), float(tau_l), float(tau))
    var = m2 - m1 * m1
    if var < 0.0:
        if var < -_NEG_VAR_TOL * m2:
            raise MomentPrecisionError(
                f"negative conditional variance {var:.3e} (m2={m2:.3e}) at "
                f"x={x!r}, y={y!r}, tau_l={tau_l!r}, tau={tau!r}")
        var = 0.0
    return BridgeMoments(m1, m2, var)


# ---------------------------------------------------------------------------
# Laplace transform


def _phi_logs(a, b, c):
    # Closed-form BVP quantities for phi'' = a (b + c u)^-2 phi, phi(0) = 1,
    # phi'(1) = 0, written in terms of e = c/b so nothing overflows:
    #   returns log phi(1), phi'(0), log(phi(1) * int_0^1 phi^-2).
    e = c / b
    rad = math.sqrt(1.0 + 4.0 * a / (c * c))
    p = 2.0 * a / (c * c * (1.0 + rad))
    q = -1.0 - p
    lg = math.log1p(e)
    g = math.exp(-rad * lg)
    om = -math.expm1(-rad * lg)
    den = p * g - q
    log_phi1 = math.log(rad) - p * lg - math.log(den)
    dphi0 = -(a / (b * c)) * om / den
    log_phi1_j = -q * lg + math.log(om) - math.log(e * rad)
    return log_phi1, dphi0, log_phi1_j


def phi_quantities(a, b, c):
    """``(phi(1), phi'(0), int_0^1 phi^-2 du)`` for the weight BVP.

    ``phi`` solves ``phi'' = a (b + c u)^-2 phi`` on ``[0, 1]`` with
    ``phi(0) = 1`` and ``phi'(1) = 0``.  With ``r = sqrt(c^2 + 4a)/c``,
    ``p = (r - 1)/2``, ``q = -(r + 1)/2``, ``e = c/b`` and
    ``g = (1 + e)^-r`` the solution is
    ``phi = eps (1 + e u)^-p + (1 - eps)(1 + e u)^-q`` with
    ``eps = -q / (p g - q)``, and

    * ``phi(1) = r (1 + e)^-p / (p g - q)``
    * ``phi'(0) = -(a / (b c)) (1 - g) / (p g - q)``
    * ``int phi^-2 = ((1 + e)^-q - (1 + e)^-p) / (e r phi(1))``, from the
      Wronskian with the solution that starts at 0 with unit slope.
    """
    if not (c > 0 and b > 0):
        raise ValueError("need b > 0 and c > 0")
    if not c * c + 4.0 * a > 0:
        raise ValueError("need c^2 + 4a > 0")
    if a == 0:
        return 1.0, 0.0, 1.0
    log_phi1, dphi0, log_phi1_j = _phi_logs(a, b, c)
    return math.exp(log_phi1), dphi0, math.exp(log_phi1_j - log_phi1)


def integral_inverse_phi_sq_expanded(a, b, c, a_scale=1.0):
    """Expanded closed form of ``int_0^1 phi^-2``, for cross-checking.

    ``a_scale`` multiplies ``a`` wherever the expanded form pairs it with the
    transform argument; ``a_scale = 1`` is the consistent reading, since
    ``a`` already carries that argument.  Overflows for large ``a``; use
    :func:`phi_quantities` in production.
    """
    r = math.sqrt(c * c + 4 * a) / c
    p = 0.5 * (r - 1.0)
    q = -0.5 * (r + 1.0)
    d = p - q
    at = a * a_scale
    bb = b * (b + c)
    pref = bb ** (q - p) * c * c / (
        8.0 * (c * c + 4 * at) ** 1.5
        * ((c * c + 2 * at) * bb**d + at * (b ** (2 * d) + (b + c) ** (2 * d))))
    t2 = (d * b ** (d + 0.5) - b ** (d + 0.5) + (b + c) ** d * math.sqrt(b)
          + (b + c) ** d * math.sqrt(b) * d) ** 2
    t3 = (2 * c * c * d * bb**d + (b + c) ** (2 * d) * (c * c + 4 * at)
          - b ** (2 * d) * (4 * at + c * (c + c * d)) - c * (b + c) ** (2 * d) * c * d)
    return pref * t2 * t3


def _log_laplace(params, x, y, tau_l, tau, theta):
    # log E[exp(-theta int X w du) | x, y]; accepts slightly negative theta
    # (as long as c^2 + 4a > 0) for finite differencing.
    if theta == 0.0:
        return 0.0
    s2 = params.sigma_v**2
    a = 8.0 * theta * tau * tau / s2
    b = 1.0 + 4.0 * params.kappa * tau_l / s2
    c = 4.0 * params.kappa * tau / s2
    if not c * c + 4.0 * a > 0:
        raise ValueError("transform argument outside the region of analyticity")
    log_phi1, dphi0, log_k = _phi_logs(a, b, c)
    inv_j = math.exp(log_phi1 - log_k)
    inv_phi1_sq_j = math.exp(-log_phi1 - log_k)
    out = (-log_k + x / (2.0 * tau) * (dphi0 - inv_j + 1.0)
           + y / (2.0 * tau) * (1.0 - inv_phi1_sq_j))
    r0 = math.sqrt(x * y) / tau
    nu = params.order
    if r0 > 0.0:
        out += log_i_kernel(nu, r0 * math.exp(-log_k)) - log_i_kernel(nu, r0)
    else:
        out -= nu * log_k
    return out


def laplace_transform(params, x, y, tau_l, tau, theta):
    """Conditional Laplace transform ``E[exp(-theta int X w du) | x, y]``.

    Parameters
    ----------
    params : HestonParams
    x, y : float
        Endpoint BESQ values.
    tau_l, tau : float
        Segment start and length in BESQ time.
    theta : float
        Transform argument, >= 0.

    Returns
    -------
    float
        In ``(0, 1]``, equal to 1 at ``theta = 0``.

    Notes
    -----
    With ``a = 8 theta tau^2 / sigma_v^2`` and ``J = int_0^1 phi^-2``::

        L = (phi(1) J)^-1 I_nu(r0 / (phi(1) J)) / I_nu(r0)
            * exp(x/(2 tau) (phi'(0) - 1/J + 1) + y/(2 tau) (1 - 1/(phi(1)^2 J)))

    where ``r0 = sqrt(xy)/tau``.  When ``r0 = 0`` the Bessel ratio becomes
    ``(phi(1) J)^-nu``.
    """
    _check_segment(x, y, tau)
    if not theta >= 0:
        raise ValueError(f"theta must be >= 0, got {theta!r}")
    # the transform of a nonnegative variable never exceeds 1; drop round-off above it
    return math.exp(min(0.0, _log_laplace(params, float(x), float(y), float(tau_l),
                                          float(tau), float(theta))))


def laplace_moments_fd(params, x, y, tau_l, tau, rel_step=1e-2):
    """First two moments from central differences of the Laplace transform.

    The step is ``h = rel_step / m1`` (capped so that ``-2h`` stays inside
    the region where the transform is analytic).  Steps ``h`` and ``2h`` are
    combined by Richardson extrapolation, cancelling the ``h^2`` error term.

    Returns
    -------
    (m1, m2) : tuple of float
    """
    mom = bridge_moments(params, x, y, tau_l, tau)
    s2 = params.sigma_v**2
    c = 4.0 * params.kappa * tau / s2
    per_theta = 8.0 * tau * tau / s2
    h = rel_step / max(mom.m1, 1e-300)
    h = min(h, 0.05 * c * c / (4.0 * per_theta))

    def lap(th):
        return math.exp(_log_laplace(params, x, y, tau_l, tau, th))

    def diffs(step):
        lp, lm = lap(step), lap(-step)
        return -(lp - lm) / (2 * step), (lp - 2.0 + lm) / step**2

    d1h, d2h = diffs(h)
    d1H, d2H = diffs(2 * h)
    return (4 * d1h - d1H) / 3, (4 * d2h - d2H) / 3


def solve_phi_numeric(params, tau_l, tau, theta, rtol=1e-12):
    """Numerical solution of the weight BVP, used to check the closed forms.

    Integrates two fundamental solutions of ``phi'' = a (b + c u)^-2 phi``
    with DOP853, combines them to meet ``phi(0) = 1`` and ``phi'(1) = 0``,
    then integrates ``phi^-2`` by adaptive quadrature.

    Returns
    -------
    (phi1, phi_prime0, int_phi_inv_sq) : tuple of float

    Raises
    ------
    RuntimeError
        If the ODE solver fails.
    """
    if not theta >= 0:
        raise ValueError(f"theta must be >= 0, got {theta!r}")
    s2 = params.sigma_v**2
    a = 8.0 * theta * tau * tau / s2
    b = 1.0 + 4.0 * params.kappa * tau_l / s2
    c = 4.0 * params.kappa * tau / s2

    def rhs(u, yv):
        m = a / (b + c * u) ** 2
        return [yv[1], m * yv[0], yv[3], m * yv[2]]

    sol = solve_ivp(rhs, (0.0, 1.0), [1.0, 0.0, 0.0, 1.0], method="DOP853",
                    rtol=rtol, atol=1e-14, dense_output=True)
    if not sol.success:
        raise RuntimeError(f"BVP shooting failed: {sol.message}")
    end = sol.y[:, -1]
    beta = -end[1] / end[3]

    def phi(u):
        v = sol.sol(u)
        return v[0] + beta * v[2]

    integral, _ = quad(lambda u: phi(u) ** -2, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    return float(phi(1.0)), float(beta), float(integral)

