"""Acceptance gate: one test, and one printed PASS/FAIL line, per criterion.

The Monte Carlo criteria (8-10) dominate the runtime, a few minutes single
threaded.  ``python tests/test_acceptance.py`` runs the gate outside pytest.
"""

import math
import time
from functools import lru_cache

import numpy as np

from smallcell.coeffs import ChannelParams, coeff_table, k0, ki
from smallcell.metrics import (MICRO_BS, DeploymentParams, MonotoneDecreasing,
                               activity_probability, asymptotic_ratio_ru,
                               asymptotic_ratio_ru_series, fit_log_regime, gamma_pc,
                               low_density_slope, metric_report, optimal_antennas,
                               optimal_bs_density, outage_log_slope, rate_r0,
                               success_probability)
from smallcell.sim import SimConfig, estimate, simulated_energy_efficiency
from smallcell.toeplitz import (matrix_success_profile, norm_derivative_wrt_pa, ps_bounds,
                                t_closed_form, t_sequence)

try:
    from conftest import record_criterion
except ImportError:  # run as a script from elsewhere
    def record_criterion(number, title, ok, detail):
        print(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")

GRID_M = range(1, 17)
GRID_PA = (0.1, 0.5, 0.9, 1.0)
GRID_ALPHA = (3.0, 4.0, 6.0)
GRID_GAMMA = (0.5, 1.0, 4.0)

LAMBDA_U = 1e-3
FIG4_DENSITIES = (1e-4, 3e-4, 5e-4, 1e-3)
FIG4_ANTENNAS = (1, 3, 5)
FIG4_TRIALS = 20_000
SIM_SEED = 2024
EE_DENSITIES = tuple(round(x * 1e-4, 12) for x in range(1, 11))


def check(number, title, ok, detail):
    record_criterion(number, title, ok, detail)
    assert ok, detail


def rel_err(a, b):
    return abs(a - b) / abs(b)


def test_criterion_01_closed_form_coefficients():
    start = time.perf_counter()
    p = ChannelParams(4.0, 1.0)
    e0 = rel_err(k0(p), math.pi / 4)
    e1 = rel_err(ki(1, p), math.pi / 8 + 0.25)
    elapsed = time.perf_counter() - start
    ok = e0 <= 1e-10 and e1 <= 1e-10 and elapsed < 1.0
    check(1, "k_0 = pi/4, k_1 = pi/8 + 1/4", ok,
          f"rel err {e0:.1e}, {e1:.1e}; {elapsed:.3f} s")


def test_criterion_02_three_path_agreement():
    start = time.perf_counter()
    worst = 0.0
    for alpha in GRID_ALPHA:
        for gamma in GRID_GAMMA:
            table = coeff_table(ChannelParams(alpha, gamma, max(GRID_M)))
            for M in GRID_M:
                for p_a in GRID_PA:
                    t = t_sequence(table, p_a, M)
                    dense = matrix_success_profile(table, p_a, M).t
                    worst = max(worst, float(np.max(np.abs(dense - t) / t)))
                    for n in range(min(M, 13)):
                        worst = max(worst, rel_err(t_closed_form(n, table, p_a), t[n]))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 10.0
    check(2, "recurrence / matrix inverse / closed form", ok,
          f"worst rel diff {worst:.1e}; {elapsed:.2f} s")


def test_criterion_03_bound_sandwich():
    violations = 0
    m1_spread = 0.0
    for alpha in GRID_ALPHA:
        for gamma in GRID_GAMMA:
            table = coeff_table(ChannelParams(alpha, gamma, max(GRID_M)))
            for M in GRID_M:
                for p_a in GRID_PA:
                    p_s = t_sequence(table, p_a, M).sum()
                    lo, hi = ps_bounds(table, p_a, M)
                    # One ulp of slack for round-off in the sums.
                    if not (lo <= p_s * (1 + 4e-16) and p_s <= hi * (1 + 4e-16)):
                        violations += 1
                    if M == 1:
                        m1_spread = max(m1_spread, abs(lo - p_s), abs(hi - p_s))
    ok = violations == 0 and m1_spread <= 1e-15
    check(3, "1/(1+p_a B_l) <= p_s <= 1/(1+p_a B_u)", ok,
          f"{violations} violations; max |bound - p_s| at M=1: {m1_spread:.1e}")


def test_criterion_04_derivative_identity():
    rng = np.random.default_rng(4)
    worst, positive = 0.0, 0
    h = 1e-6
    for _ in range(20):
        alpha = float(rng.choice(GRID_ALPHA))
        gamma = float(rng.choice(GRID_GAMMA))
        M = int(rng.integers(1, 17))
        # Central differences need room on both sides of p_a.
        p_a = float(rng.choice((0.1, 0.5, 0.9, 1.0 - 2 * h)))
        table = coeff_table(ChannelParams(alpha, gamma, M))
        d = norm_derivative_wrt_pa(table, p_a)
        fd = (t_sequence(table, p_a + h).sum() - t_sequence(table, p_a - h).sum()) / (2 * h)
        worst = max(worst, abs(d - fd))
        positive += d > 0
    ok = worst <= 1e-5 and positive == 0
    check(4, "d p_s / d p_a vs central differences", ok,
          f"max abs diff {worst:.1e}; {positive} positive derivatives")


def test_criterion_05_outage_slope():
    start = time.perf_counter()
    ch = ChannelParams(4.0, 1.0)
    slopes, errs = [], []
    for lb in (1e-4, 5e-4):
        p_a = DeploymentParams(lb, LAMBDA_U).p_a
        slope = outage_log_slope(ch, p_a, (8, 16))
        pred = -math.log10(asymptotic_ratio_ru(ch, p_a))
        slopes.append(slope)
        errs.append(rel_err(slope, pred))
    elapsed = time.perf_counter() - start
    ok = max(errs) <= 0.05 and slopes[1] < slopes[0] and elapsed < 30.0
    check(5, "log10 p_out slope over M in [8, 16] vs -log10 r_u", ok,
          f"slopes {slopes[0]:.4f}, {slopes[1]:.4f}; rel err {errs[0]:.2%}, {errs[1]:.2%}; "
          f"{elapsed:.2f} s")


def test_criterion_06_ru_dual_form():
    ch = ChannelParams(4.0, 1.0)
    worst, inside = 0.0, True
    for p_a in (0.2, 0.5, 0.9):
        a = asymptotic_ratio_ru(ch, p_a)
        b = asymptotic_ratio_ru_series(ch, p_a)
        worst = max(worst, abs(a - b))
        inside &= all(1 < r < 1 + 1 / ch.gamma_hat for r in (a, b))
    ok = worst <= 1e-6 and inside
    check(6, "r_u integral root vs series root", ok,
          f"max |diff| {worst:.1e}; inside (1, 1+1/gamma): {inside}")


def test_criterion_07_optimizers():
    start = time.perf_counter()
    ch = ChannelParams(4.0, 1.0)
    opt = optimal_bs_density(ch, MICRO_BS, LAMBDA_U, mu=3.5, bound_choice="mid")
    ratio = opt.lambda_b_star / LAMBDA_U
    dep = DeploymentParams(opt.lambda_b_star, LAMBDA_U)
    M_star = optimal_antennas(ch, dep, MICRO_BS).M_star
    g_pc = gamma_pc(ch, MICRO_BS)
    monotone = [isinstance(optimal_bs_density(ch.with_antennas(M), MICRO_BS, LAMBDA_U),
                           MonotoneDecreasing) for M in range(2, 9)]
    elapsed = time.perf_counter() - start
    ok = (opt.B == k0(ch) or abs(opt.B - k0(ch)) < 1e-15) and 0.30 <= ratio <= 0.34 \
        and M_star == 1 and g_pc <= MICRO_BS.P_c and abs(g_pc - 30.2) < 0.05 \
        and all(monotone) and elapsed < 5.0
    check(7, "density and antenna optimizers", ok,
          f"lambda_b*/lambda_u {ratio:.4f}, M* {M_star}, gamma_Pc {g_pc:.3f} W, "
          f"monotone for M=2..8: {all(monotone)}; {elapsed:.2f} s")


def fig4_config(lambda_b, M, layout, trials=FIG4_TRIALS):
    return SimConfig(ChannelParams(4.0, 1.0, M), DeploymentParams(lambda_b, LAMBDA_U),
                     MICRO_BS, window_side=2000.0, trials=trials, seed=SIM_SEED, layout=layout)


@lru_cache(maxsize=None)
def fig4_grid(layout):
    start = time.perf_counter()
    out = {(lb, M): estimate(fig4_config(lb, M, layout))
           for lb in FIG4_DENSITIES for M in FIG4_ANTENNAS}
    return out, time.perf_counter() - start


def test_criterion_08_monte_carlo_vs_analytic():
    grid, elapsed = fig4_grid("ppp")
    inside, worst, n = 0, 0.0, len(grid)
    for (lb, M), est in grid.items():
        ref = success_probability(ChannelParams(4.0, 1.0, M), DeploymentParams(lb, LAMBDA_U).p_a)
        lo, hi = est.ps_interval(0.99)
        inside += lo <= ref <= hi
        worst = max(worst, abs(est.p_s_hat - ref))
    ok = inside >= 0.9 * n and worst <= 0.03 and elapsed < 600.0
    check(8, "PPP simulation vs analytic p_s", ok,
          f"{inside}/{n} inside 99% Wilson CI, max |gap| {worst:.4f}; {elapsed:.0f} s")


@lru_cache(maxsize=None)
def hex_ee_curve():
    ee = []
    for lb in EE_DENSITIES:
        cfg = fig4_config(lb, 1, "hexagonal")
        ee.append(simulated_energy_efficiency(estimate(cfg), cfg))
    return np.array(ee)


def test_criterion_09_hexagonal_upper_bound():
    ppp, _ = fig4_grid("ppp")
    hexa, _ = fig4_grid("hexagonal")
    below = [(lb, M) for (lb, M), est in hexa.items()
             if est.p_s_hat < ppp[(lb, M)].p_s_hat - ppp[(lb, M)].ci_half_width_95]
    ee = hex_ee_curve()
    peak = EE_DENSITIES[int(np.argmax(ee))]
    spread = (ee.max() - np.sort(ee)[-2]) / ee.max()
    ok = not below and 0.2 * LAMBDA_U <= peak <= 0.45 * LAMBDA_U
    check(9, "hexagonal layout bounds PPP; hex EE peak location", ok,
          f"{len(below)} grid points below PPP - CI; EE peak at lambda_b = {peak:.1e} "
          f"(runner-up within {spread:.2%})")


def test_criterion_10_activity_probability():
    worst, inside = 0.0, 0
    rhos = (0.1, 0.5, 1.0, 2.0)
    obs = []
    for rho in rhos:
        dep = DeploymentParams(rho * LAMBDA_U, LAMBDA_U)
        # Enough trials for at least 1e5 BS observations.
        trials = math.ceil(1.05e5 / (dep.lambda_b * 2000.0**2))
        est = estimate(SimConfig(ChannelParams(4.0, 1.0), dep, MICRO_BS, trials=trials, seed=10))
        lo, hi = est.pa_interval(0.95)
        ref = activity_probability(rho, 3.5)
        inside += lo <= ref <= hi
        worst = max(worst, abs(est.p_a_hat - ref))
        obs.append(est.bs_observations)
    ok = inside == len(rhos) and min(obs) >= 1e5
    check(10, "simulated p_a vs activity law (mu = 3.5)", ok,
          f"{inside}/{len(rhos)} inside 95% CI, max |diff| {worst:.1e}, "
          f"min observations {min(obs)}")


def test_criterion_11_throughput_regimes():
    ch = ChannelParams(4.0, 1.0)
    c0 = low_density_slope(ch)
    lin = {}
    for rho in (1e-3, 1e-4, 1e-5):
        rep = metric_report(ch, DeploymentParams(rho * LAMBDA_U, LAMBDA_U))
        lin[rho] = abs(rep.R_a / (rho * LAMBDA_U) / c0 - 1.0)
    high = metric_report(ch, DeploymentParams(100 * LAMBDA_U, LAMBDA_U))
    high_err = rel_err(high.R_a, LAMBDA_U * rate_r0(ch.gamma_hat))
    fit = fit_log_regime(ch, LAMBDA_U, np.logspace(-1, 1, 21))
    ok = max(lin.values()) <= 1e-9 and high_err <= 0.05 and fit.r_squared >= 0.98
    lin_txt = ", ".join(f"rho={r:g}: {e:.1e}" for r, e in lin.items())
    check(11, "linear / saturating / logarithmic throughput", ok,
          f"linear slope rel err [{lin_txt}]; R_a/(lambda_u R_0) err {high_err:.2%}; "
          f"log-fit R^2 {fit.r_squared:.4f}")


if __name__ == "__main__":
    import sys
    failures = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                failures += 1
    sys.exit(1 if failures else 0)
