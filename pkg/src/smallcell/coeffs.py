"""Interference coefficients k_0, k_1, ... of the multi-antenna outage formula.

Each coefficient is an integral over the normalized interferer distance
``v`` measured from the serving-BS exclusion radius::

    k_0 = g^(2/a) * int_{g^(-2/a)}^inf dv / (1 + v^(a/2))
    k_i = g^(2/a) * int_{g^(-2/a)}^inf dv / ((1 + v^(a/2))^i (1 + v^(-a/2)))

with ``a`` the pathloss exponent and ``g`` the SINR threshold.  Both have a
Gauss hypergeometric closed form.  Quadrature is the reference path and the
hypergeometric series is an independent cross-check.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import NumericalError

QUAD_EPSABS = 1e-12
QUAD_EPSREL = 1e-10
QUAD_LIMIT = 200

# Paths disagreeing by more than this are treated as a transcription bug.
CROSSCHECK_RTOL = 1e-8
CROSSCHECK_MAX_INDEX = 32

SERIES_RTOL = 1e-14
SERIES_MAX_TERMS = 100_000

# Entries below this are stored as exact zeros (log value is still kept).
UNDERFLOW_CLAMP = 1e-300


@dataclass(frozen=True)
class ChannelParams:
    """Pathloss exponent, linear SINR threshold and antennas per BS."""

    alpha: float
    gamma_hat: float
    M: int = 1

    def __post_init__(self):
        if not self.alpha > 2:
            raise ValueError(f"pathloss exponent must exceed 2, got {self.alpha}")
        if not self.gamma_hat > 0:
            raise ValueError(f"SINR threshold must be positive, got {self.gamma_hat}")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"antenna count must be a positive integer, got {self.M}")
        object.__setattr__(self, "M", int(self.M))

    @property
    def delta(self):
        """The ratio 2/alpha that appears in every exponent."""
        return 2.0 / self.alpha

    def with_antennas(self, M):
        return ChannelParams(self.alpha, self.gamma_hat, M)


def _exponents(i, delta):
    # After v -> u = 1/(1 + v^(a/2)) the integrand is u^p (1-u)^q on (0, u0].
    if i == 0:
        return -delta, delta - 1.0
    return i - 1.0 - delta, delta


def log_k_quad(i, params):
    """Natural log of k_i by adaptive Gauss-Kronrod quadrature.

    Substituting ``u = 1/(1 + v^(a/2))`` and then ``u = u0 * t^(1/(p+1))``
    turns the semi-infinite integral into a bounded, non-singular integral on
    ``[0, 1]`` whose value is O(1) for every index, so large indices never
    underflow before the final exponentiation.

    Returns:
        ``(log_value, relative_error_estimate)``
    """
    delta = params.delta
    g = params.gamma_hat
    p, q = _exponents(i, delta)
    u0 = g / (1.0 + g)
    e = 1.0 / (p + 1.0)

    def integrand(t):
        return (1.0 - u0 * t**e) ** q

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        result = quad(integrand, 0.0, 1.0, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
                      limit=QUAD_LIMIT, full_output=1)
    val, abserr = result[0], result[1]
    # A 4th/5th element is only returned when QUADPACK flags a problem.
    flagged = len(result) > 3 and abserr > max(QUAD_EPSABS, QUAD_EPSREL * abs(val))
    if flagged or not np.isfinite(val) or val <= 0:
        raise NumericalError(
            f"quadrature for k_{i} did not converge (value={val}, error estimate={abserr})",
            error_estimate=abserr, index=i,
        )
    log_val = (delta * math.log(g) + math.log(delta) + (p + 1.0) * math.log(u0)
               - math.log(p + 1.0) + math.log(val))
    return log_val, abserr / val


def k0(params):
    """k_0 by quadrature.

    >>> round(k0(ChannelParams(4.0, 1.0)), 12) == round(math.pi / 4, 12)
    True
    """
    return math.exp(log_k_quad(0, params)[0])


def ki(i, params):
    """k_i for ``i >= 1`` by quadrature."""
    if int(i) != i or i < 1:
        raise ValueError(f"coefficient index must be a positive integer, got {i}")
    return math.exp(log_k_quad(int(i), params)[0])


def log_k_downward(params, start, stop, pad=64):
    """log k_i for ``start <= i < stop`` (``start >= 1``) by downward recurrence.

    With ``J_p = u0^-(p+1) int_0^u0 u^p (1-u)^q du`` integration by parts gives
    ``J_p = ((p+q+2) u0 J_{p+1} + (1-u0)^(q+1)) / (p+1)``; run downwards every
    step shrinks inherited error by roughly u0, so the single quadrature
    anchor placed ``pad`` indices above the range is forgotten long before
    the requested indices are reached.  Intended for very long tails where a
    quadrature per index is too slow.
    """
    if start < 1:
        raise ValueError("downward recurrence covers i >= 1 only")
    d = params.delta
    g = params.gamma_hat
    u0 = g / (1.0 + g)
    q = d
    top = stop - 1 + pad
    log_anchor, _ = log_k_quad(top, params)
    p_top = top - 1.0 - d
    # Undo the constant and u0^(p+1) scaling to get J at the anchor.
    const = d * math.log(g) + math.log(d)
    J = math.exp(log_anchor - const - (p_top + 1.0) * math.log(u0))
    tail_const = (1.0 - u0) ** (q + 1.0)
    out = np.empty(stop - start)
    for i in range(top - 1, start - 1, -1):
        p = i - 1.0 - d
        J = ((p + q + 2.0) * u0 * J + tail_const) / (p + 1.0)
        if i < stop:
            out[i - start] = const + (p + 1.0) * math.log(u0) + math.log(J)
    return out


def _series(a, b, c, x):
    # Plain Gauss series for 0 <= x < 1.
    total = 1.0
    term = 1.0
    for n in range(SERIES_MAX_TERMS):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * x
        total += term
        if abs(term) <= SERIES_RTOL * abs(total):
            # Tail of a geometric-like series with ratio ~x.
            if x < 1 and abs(term) * x / (1 - x) <= SERIES_RTOL * abs(total):
                return total
    raise NumericalError(
        f"2F1({a}, {b}; {c}; {x}) series did not converge in {SERIES_MAX_TERMS} terms",
        error_estimate=abs(term),
    )


def log_hyp2f1(a, b, c, z):
    """Return ``(log_prefactor, series)`` with 2F1(a,b;c;z) = exp(log_prefactor) * series.

    Only real ``z < 1`` is supported.  Negative arguments are mapped to
    ``x = z/(z-1)`` in (0, 1) by the Pfaff transformation
    ``2F1(a,b;c;z) = (1-z)^(-a) 2F1(a, c-b; c; x)``, which avoids the
    alternating-sign cancellation of the direct series.  Arguments in
    [0, 1) use the direct series, which slows down as z approaches 1.
    """
    if z >= 1:
        raise ValueError("hypergeometric argument must be below 1")
    if z < 0:
        x = z / (z - 1.0)
        return -a * math.log1p(-z), _series(a, c - b, c, x)
    return 0.0, _series(a, b, c, z)


def hyp2f1(a, b, c, z):
    log_pre, s = log_hyp2f1(a, b, c, z)
    return math.exp(log_pre) * s


def log_k_hyp(i, params):
    """Natural log of k_i from its Gauss hypergeometric closed form."""
    d = params.delta
    g = params.gamma_hat
    if i == 0:
        log_pre, s = log_hyp2f1(1.0, 1.0 - d, 2.0 - d, -g)
        return math.log(d) + math.log(g) - math.log(1.0 - d) + log_pre + math.log(s)
    log_pre, s = log_hyp2f1(i + 1.0, i - d, i + 1.0 - d, -g)
    return math.log(d) + i * math.log(g) - math.log(i - d) + log_pre + math.log(s)


def k_hypergeometric(i, params):
    return math.exp(log_k_hyp(i, params))


@dataclass(frozen=True)
class CoefficientTable:
    """k_0 ... k_{M-1} for one channel configuration.

    ``log_k`` always holds finite logs; ``k`` holds the values with anything
    below ``UNDERFLOW_CLAMP`` set to zero and listed in ``clamped``.
    """

    params: ChannelParams
    k: np.ndarray
    log_k: np.ndarray
    clamped: tuple = field(default=())

    def __post_init__(self):
        self.k.setflags(write=False)
        self.log_k.setflags(write=False)

    @property
    def k0(self):
        return float(self.k[0])

    def __len__(self):
        return len(self.k)


def coeff_table(params, crosscheck=True, n=None):
    """Build the coefficient table for ``params.M`` antennas (or ``n`` entries).

    With ``crosscheck`` every index up to ``CROSSCHECK_MAX_INDEX`` is also
    evaluated through the hypergeometric form; a mismatch beyond
    ``CROSSCHECK_RTOL`` raises :class:`NumericalError`.
    """
    n = params.M if n is None else int(n)
    log_k = np.empty(n)
    for i in range(n):
        try:
            log_k[i], _ = log_k_quad(i, params)
        except NumericalError as exc:
            exc.index = i
            raise
        if crosscheck and i <= CROSSCHECK_MAX_INDEX:
            other = log_k_hyp(i, params)
            # Relative difference of the values == difference of the logs to first order.
            if abs(math.expm1(other - log_k[i])) > CROSSCHECK_RTOL:
                raise NumericalError(
                    f"k_{i}: quadrature and hypergeometric forms disagree "
                    f"({math.exp(log_k[i])!r} vs {math.exp(other)!r})",
                    error_estimate=abs(math.expm1(other - log_k[i])), index=i,
                )
    k = np.exp(log_k)
    small = np.flatnonzero(k < UNDERFLOW_CLAMP)
    k[small] = 0.0
    return CoefficientTable(params, k, log_k, tuple(int(j) for j in small))
