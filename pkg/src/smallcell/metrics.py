"""Network-level metrics and optimizers built on the Toeplitz success profile.

Everything here is interference-limited (noise enters only the simulator).
Densities are per square metre, powers in watts, throughputs in bit/s/Hz.
"""

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .coeffs import ChannelParams, coeff_table, log_k_downward
from .errors import NumericalError
from .toeplitz import (
    bound_constants,
    norm_derivative_wrt_pa,
    ps_bounds,
    t_sequence,
    toeplitz_square_first_column,
)

DEFAULT_MU = 3.5

RU_QUAD_EPSREL = 1e-10
RU_ROOT_XTOL = 1e-9
RU_BRACKET_GAP = 1e-9
RU_SERIES_TERMS = 500

# Optimal densities beyond this BS/user ratio are flagged as "keep densifying".
UNBOUNDED_RHO = 1e4

BOUND_CHOICES = ("lower", "upper", "mid")


@lru_cache(maxsize=256)
def cached_table(alpha, gamma_hat, n):
    """Coefficient table shared across calls; tables are immutable."""
    return coeff_table(ChannelParams(alpha, gamma_hat, max(int(n), 1)))


def table_for(channel, n=None):
    return cached_table(channel.alpha, channel.gamma_hat, channel.M if n is None else n)


@dataclass(frozen=True)
class DeploymentParams:
    lambda_b: float
    lambda_u: float
    mu: float = DEFAULT_MU

    def __post_init__(self):
        if not self.lambda_b > 0:
            raise ValueError(f"BS density must be positive, got {self.lambda_b}")
        if not self.lambda_u > 0:
            raise ValueError(f"user density must be positive, got {self.lambda_u}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not 3 <= self.mu <= 5:
            warnings.warn(f"cell-size fitting constant mu={self.mu} is outside [3, 5]",
                          stacklevel=2)

    @property
    def rho(self):
        return self.lambda_b / self.lambda_u

    @property
    def p_a(self):
        return activity_probability(self.rho, self.mu)


@dataclass(frozen=True)
class PowerModel:
    """Linear BS power model ``P_BS = P_t/eta + M*P_c + P_0``."""

    eta: float
    P_t: float
    P_c: float
    P_0: float

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError(f"amplifier efficiency must be in (0, 1], got {self.eta}")
        for name in ("P_t", "P_c", "P_0"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def load_dependent(self, M):
        """Power drawn only while transmitting: ``P_t/eta + M*P_c``."""
        return self.P_t / self.eta + M * self.P_c

    def p_bs(self, M):
        return self.load_dependent(M) + self.P_0


MICRO_BS = PowerModel(eta=0.32, P_t=6.3, P_c=35.0, P_0=34.0)


@dataclass(frozen=True)
class MetricReport:
    p_a: float
    p_out: float
    p_s: float
    R_a: float
    R_u: float
    eta_EE: float
    R_0: float
    ps_lower: float
    ps_upper: float
    R_a_lower: float
    R_a_upper: float
    R_u_lower: float
    R_u_upper: float

    def as_dict(self):
        return dict(self.__dict__)


def activity_probability(rho, mu=DEFAULT_MU):
    """Probability that a BS has at least one user: ``1 - (1 + 1/(mu*rho))^-mu``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0) or mu <= 0:
        raise ValueError("rho and mu must be positive")
    # -expm1(-mu*log1p(x)) keeps precision when p_a is close to 1.
    out = -np.expm1(-mu * np.log1p(1.0 / (mu * rho)))
    return float(out) if out.ndim == 0 else out


def rho_for_activity(p_a, mu=DEFAULT_MU):
    """Exact inverse of :func:`activity_probability`."""
    if not 0 < p_a < 1:
        raise ValueError(f"activity probability must be in (0, 1), got {p_a}")
    return 1.0 / (mu * math.expm1(-math.log1p(-p_a) / mu))


def rate_r0(gamma_hat):
    return math.log2(1.0 + gamma_hat)


def success_probability(channel, p_a):
    return float(t_sequence(table_for(channel), p_a).sum())


def outage_probability(channel, deploy):
    return 1.0 - success_probability(channel, deploy.p_a)


def energy_efficiency(p_a, p_s, r0, power, M):
    """Bits per joule per hertz for an average BS."""
    return p_a * p_s * r0 / (p_a * power.load_dependent(M) + power.P_0)


def metric_report(channel, deploy, power: Optional[PowerModel] = None):
    table = table_for(channel)
    p_a = deploy.p_a
    t = t_sequence(table, p_a)
    p_s = float(t.sum())
    lo, hi = ps_bounds(table, p_a)
    r0 = rate_r0(channel.gamma_hat)
    per_active = p_a * r0
    R_a = deploy.lambda_b * per_active * p_s
    R_u = deploy.rho * per_active * p_s
    ee = energy_efficiency(p_a, p_s, r0, power, channel.M) if power is not None else math.nan
    return MetricReport(
        p_a=p_a, p_out=1.0 - p_s, p_s=p_s, R_a=R_a, R_u=R_u, eta_EE=ee, R_0=r0,
        ps_lower=lo, ps_upper=hi,
        R_a_lower=deploy.lambda_b * per_active * lo, R_a_upper=deploy.lambda_b * per_active * hi,
        R_u_lower=deploy.rho * per_active * lo, R_u_upper=deploy.rho * per_active * hi,
    )


def low_density_slope(channel):
    """c_0 such that ``R_a ~ c_0 * lambda_b`` when every BS is active."""
    return success_probability(channel, 1.0) * rate_r0(channel.gamma_hat)


# --- asymptotic per-antenna outage decay -------------------------------------

def _ru_lhs(r, channel):
    # gamma^(2/a) int_{v0}^inf (r-1)/(1 + v^(a/2) - r) dv after the same
    # u = 1/(1+v^(a/2)), u = u0*t^(1/(1-d)) substitution used for k_0.
    d = channel.delta
    g = channel.gamma_hat
    u0 = g / (1.0 + g)
    e = 1.0 / (1.0 - d)

    def integrand(t):
        s = t**e
        return (1.0 - u0 * s) ** (d - 1.0) / (1.0 - r * u0 * s)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        val, err = quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=RU_QUAD_EPSREL, limit=500)[:2]
    if not np.isfinite(val):
        raise NumericalError(f"r_u integral is not finite at r={r}", error_estimate=err)
    return g**d * d * (r - 1.0) * u0 ** (1.0 - d) / (1.0 - d) * val


def _bisect(at_or_above_root, lo, hi, xtol):
    # The equation's left side increases in r and diverges at the open upper
    # end, so a root outside [lo, hi] is within the bracket gap of an end.
    if at_or_above_root(lo):
        return lo
    if not at_or_above_root(hi):
        return hi
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if at_or_above_root(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def asymptotic_ratio_ru(channel, p_a):
    """Limit ratio ``t_n / t_{n+1}`` (= ``p_out(M)/p_out(M+1)`` for large M).

    Solves the integral equation for r in ``(1, 1 + 1/gamma_hat)`` by
    bisection.
    """
    if not 0 < p_a <= 1:
        raise ValueError(f"activity probability must lie in (0, 1], got {p_a}")
    upper = 1.0 + 1.0 / channel.gamma_hat
    target = 1.0 / p_a
    return _bisect(lambda r: _ru_lhs(r, channel) >= target,
                   1.0 + RU_BRACKET_GAP, upper - RU_BRACKET_GAP, RU_ROOT_XTOL)


class _CoefficientTail:
    """log(k_i/k_0) for i >= 1, quadrature first, then downward recurrence."""

    def __init__(self, channel, n_quad):
        table = cached_table(channel.alpha, channel.gamma_hat, n_quad + 1)
        self.channel = channel
        self.log_k0 = float(table.log_k[0])
        self.rel = np.asarray(table.log_k[1:]) - self.log_k0

    def upto(self, n):
        have = len(self.rel)
        if n > have:
            ext = log_k_downward(self.channel, have + 1, 2 * n + 1) - self.log_k0
            self.rel = np.concatenate((self.rel, ext))
        return self.rel[:n]


def asymptotic_ratio_ru_series(channel, p_a, terms=None, rtol=1e-13, max_terms=2**21):
    """Same root from the generating-function pole condition.

    ``(k_0 p_a / (1 + k_0 p_a)) * sum_{i>=1} (k_i/k_0) r^i = 1``.  With
    ``terms`` the sum is simply truncated.  Otherwise terms are added until
    the geometric tail bound (``k_{i+1} <= u0 k_i``, ``u0 = g/(1+g)``) makes
    each bisection decision certain or the tail negligible.  Roots within
    about ``1/max_terms`` of ``1 + 1/gamma_hat`` are not resolved.
    """
    if not 0 < p_a <= 1:
        raise ValueError(f"activity probability must lie in (0, 1], got {p_a}")
    g = channel.gamma_hat
    u0 = g / (1.0 + g)
    tail = _CoefficientTail(channel, RU_SERIES_TERMS if terms is None else terms)
    k0 = math.exp(tail.log_k0)
    target = (1.0 + k0 * p_a) / (k0 * p_a)

    def partial(r, n):
        idx = np.arange(1, n + 1)
        terms_ = np.exp(tail.upto(n) + idx * math.log(r))
        return terms_.sum(), terms_[-1]

    def at_or_above_root(r):
        if terms is not None:
            return partial(r, terms)[0] >= target
        n = RU_SERIES_TERMS
        while True:
            s, last = partial(r, n)
            if s >= target:
                return True
            bound = last * r * u0 / (1.0 - r * u0)
            if s + bound < target or bound <= rtol * s:
                return False
            if n >= max_terms:
                # Only reachable within the bracket gap of the upper end.
                return False
            n *= 2

    upper = 1.0 + 1.0 / g
    return _bisect(at_or_above_root, 1.0 + RU_BRACKET_GAP, upper - RU_BRACKET_GAP,
                   RU_ROOT_XTOL)


def outage_log_slope(channel, p_a, M_range=(8, 16)):
    """Least-squares slope of ``log10 p_out`` against M over ``M_range`` inclusive."""
    m_lo, m_hi = M_range
    t = t_sequence(table_for(channel, m_hi), p_a, m_hi)
    Ms = np.arange(m_lo, m_hi + 1)
    p_out = 1.0 - np.cumsum(t)[Ms - 1]
    return float(np.polyfit(Ms, np.log10(p_out), 1)[0])


# --- energy efficiency vs. BS density ----------------------------------------

def gamma_p0(channel):
    """Threshold on ``P_0/P_BS`` above which densification always costs efficiency.

    ``1 - ||A^-2||_1 / ||A^-1||_1`` with ``A = (k_0+1) I - Q_M``; at p_a = 1
    the Toeplitz matrix T_M equals ``A^-1``.
    """
    tau = t_sequence(table_for(channel), 1.0)
    return float(1.0 - toeplitz_square_first_column(tau).sum() / tau.sum())


def select_bound(channel, bound_choice="mid"):
    B_l, B_u = bound_constants(table_for(channel))
    if bound_choice == "lower":
        return B_l
    if bound_choice == "upper":
        return B_u
    if bound_choice == "mid":
        return 0.5 * (B_l + B_u)
    raise ValueError(f"bound_choice must be one of {BOUND_CHOICES}, got {bound_choice!r}")


@dataclass(frozen=True)
class MonotoneDecreasing:
    """No interior optimum: efficiency falls as BS density grows."""

    p_a_star: float
    B: float


@dataclass(frozen=True)
class DensityOptimum:
    lambda_b_star: float
    rho_star: float
    p_a_star: float
    eta_EE_star: float
    B: float
    eta_EE_exact: float
    unbounded: bool
    # Literal value of the printed closed-form density, kept for comparison.
    printed_lambda_b: float
    notes: tuple = field(default=())


def optimal_bs_density(channel, power, lambda_u, mu=DEFAULT_MU, bound_choice="mid"):
    """Energy-efficient BS density under ``p_s ~ 1/(1 + p_a B)``.

    Maximizing ``p_a / ((1 + p_a B)(p_a C + P_0))`` over the activity
    probability gives ``p_a* = sqrt(P_0 / (B C))`` with ``C = P_t/eta + M P_c``;
    the density follows by inverting the activity law exactly.  ``p_a* >= 1``
    means no interior optimum and :class:`MonotoneDecreasing` is returned.
    """
    B = select_bound(channel, bound_choice)
    C = power.load_dependent(channel.M)
    r0 = rate_r0(channel.gamma_hat)
    p_a_star = math.sqrt(power.P_0 / (B * C))
    if p_a_star >= 1.0:
        return MonotoneDecreasing(p_a_star=p_a_star, B=B)
    notes = []
    printed = math.nan
    if p_a_star > 0:
        rho_star = rho_for_activity(p_a_star, mu)
        # (1/mu) [1 - (1 - p_a*)^(-1/mu)] lambda_u, evaluated literally.
        printed = (1.0 - (1.0 - p_a_star) ** (-1.0 / mu)) / mu * lambda_u
        if not printed > 0:
            notes.append("printed closed-form density is non-positive; "
                         "using the exact inverse of the activity law")
    else:
        rho_star = math.inf
    lambda_b_star = rho_star * lambda_u
    eta_star = r0 / (math.sqrt(C) + math.sqrt(power.P_0 * B)) ** 2
    if math.isfinite(lambda_b_star):
        p_s = success_probability(channel, p_a_star)
        eta_exact = energy_efficiency(p_a_star, p_s, r0, power, channel.M)
    else:
        eta_exact = math.nan
    return DensityOptimum(
        lambda_b_star=lambda_b_star, rho_star=rho_star, p_a_star=p_a_star,
        eta_EE_star=eta_star, B=B, eta_EE_exact=eta_exact,
        unbounded=not rho_star <= UNBOUNDED_RHO, printed_lambda_b=printed,
        notes=tuple(notes),
    )


def ee_increasing_in_pa_at_full_load(channel, power):
    """Sign of d eta_EE / d p_a at p_a = 1 from the exact derivative identity."""
    table = table_for(channel)
    p_s = float(t_sequence(table, 1.0).sum())
    dps = norm_derivative_wrt_pa(table, 1.0)
    C = power.load_dependent(channel.M)
    return p_s * power.P_0 + dps * (C + power.P_0) >= 0


# --- energy efficiency vs. antenna count -------------------------------------

@dataclass(frozen=True)
class AntennaOptimum:
    M_star: int
    saturated: bool
    threshold: float
    F: np.ndarray
    eta_EE: np.ndarray


def optimal_antennas(channel_base, deploy, power, M_max=64):
    """Energy-optimal antenna count from the monotone F(M) criterion.

    ``F(M) = p_s(M)/t_{M-1} - M`` is nondecreasing and
    ``eta_EE(M) >= eta_EE(M-1)`` exactly when ``F(M)`` is at most
    ``(p_a P_t/eta + P_0) / (p_a P_c)``; M* is the largest such M.
    """
    M_max = int(M_max)
    if M_max < 1:
        raise ValueError("M_max must be at least 1")
    p_a = deploy.p_a
    table = table_for(channel_base, M_max)
    t = t_sequence(table, p_a, M_max)
    S = np.cumsum(t)
    Ms = np.arange(1, M_max + 1)
    F = S / t - Ms
    if power.P_c > 0:
        threshold = (p_a * power.P_t / power.eta + power.P_0) / (p_a * power.P_c)
    else:
        threshold = math.inf
    ok = np.flatnonzero(F <= threshold)
    M_star = int(Ms[ok[-1]])
    saturated = M_star == M_max
    if not saturated:
        # Two-sided optimality condition around M*.
        assert F[M_star - 1] <= threshold < F[M_star]
    r0 = rate_r0(channel_base.gamma_hat)
    ee = S * r0 / (power.P_t / power.eta + Ms * power.P_c + power.P_0 / p_a)
    return AntennaOptimum(M_star=M_star, saturated=saturated, threshold=threshold,
                          F=F, eta_EE=ee)


def gamma_pc(channel, power):
    """Per-chain circuit power above which single-antenna BSs are optimal."""
    table = table_for(channel, 2)
    k0, k1 = float(table.k[0]), float(table.k[1])
    return max(k1 * power.P_0,
               k1 * (power.P_t / power.eta + power.P_0) / (1.0 + k0 - k1))


# --- throughput regimes -------------------------------------------------------

@dataclass(frozen=True)
class LogFit:
    c1: float
    c2: float
    r_squared: float
    residuals: np.ndarray


def fit_log_regime(channel, lambda_u, rho_grid, mu=DEFAULT_MU):
    """Least-squares ``R_a ~ c1 ln(rho) + c2`` over a user-supplied rho grid."""
    rho_grid = np.asarray(rho_grid, dtype=float)
    if rho_grid.size < 3:
        raise ValueError("need at least three rho values to fit")
    Ra = np.array([
        metric_report(channel, DeploymentParams(r * lambda_u, lambda_u, mu)).R_a
        for r in rho_grid
    ])
    x = np.log(rho_grid)
    c1, c2 = np.polyfit(x, Ra, 1)
    resid = Ra - (c1 * x + c2)
    ss_tot = np.sum((Ra - Ra.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot
    return LogFit(float(c1), float(c2), float(r2), resid)


def density_regime(rho):
    if rho <= 0.1:
        return "low"
    if rho >= 10:
        return "high"
    return "medium"
