"""Monte Carlo network simulator on a toroidal window.

Each trial draws base stations (PPP or randomly shifted hexagonal lattice)
and PPP users, associates every user with its nearest station, marks a
station active when it has at least one user, then measures the SINR of a
uniformly tagged user against every other active station.

Trials are grouped in fixed-size batches.  Batch ``b`` draws from its own
Philox stream seeded by ``SeedSequence(seed, spawn_key=(b,))``, so results
depend only on the seed and batch size, never on the number of workers.
"""

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.stats import norm

from . import _kernels
from .coeffs import ChannelParams
from .errors import NoTaggedUser
from .metrics import MICRO_BS, DeploymentParams, PowerModel, energy_efficiency, rate_r0

DEFAULT_NOISE_DBM = -97.5
DEFAULT_WINDOW = 2000.0
DEFAULT_BATCH = 500
MIN_EXPECTED_BS = 50
MAX_RESAMPLES = 10**6
LAYOUTS = ("ppp", "hexagonal")
SAMPLINGS = ("marginal", "vector")


def dbm_to_watts(dbm):
    return 10.0 ** (dbm / 10.0) / 1000.0


@dataclass(frozen=True)
class SimConfig:
    """Everything that determines a simulation run, seed included."""

    channel: ChannelParams
    deploy: DeploymentParams
    power: PowerModel = MICRO_BS
    window_side: float = DEFAULT_WINDOW
    trials: int = 10_000
    seed: int = 0
    noise_power: float = dbm_to_watts(DEFAULT_NOISE_DBM)
    layout: str = "ppp"
    channel_sampling: str = "marginal"
    batch_size: int = DEFAULT_BATCH

    def __post_init__(self):
        if not self.window_side > 0:
            raise ValueError(f"window side must be positive, got {self.window_side}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not self.noise_power >= 0:
            raise ValueError(f"noise power must be non-negative, got {self.noise_power}")
        if self.layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        if self.channel_sampling not in SAMPLINGS:
            raise ValueError(f"channel sampling must be one of {SAMPLINGS}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValueError("batch size must be a positive integer")
        expected = self.window_side**2 * self.deploy.lambda_b
        if expected < MIN_EXPECTED_BS:
            warnings.warn(f"window holds only {expected:.1f} BSs on average; "
                          "edge and small-sample effects may dominate", stacklevel=2)


@dataclass(frozen=True)
class Realization:
    """Station and user coordinates on the torus ``[0, lx) x [0, ly)``."""

    bx: np.ndarray
    by: np.ndarray
    ux: np.ndarray
    uy: np.ndarray
    lx: float
    ly: float
    resamples: int = 0

    @property
    def n_bs(self):
        return len(self.bx)

    @property
    def n_users(self):
        return len(self.ux)


@dataclass(frozen=True)
class CellMap:
    serving: np.ndarray
    dist2: np.ndarray
    load: np.ndarray
    active: np.ndarray  # uint8, one per station

    @property
    def n_active(self):
        return int(self.active.sum())


@dataclass(frozen=True)
class TrialOutcome:
    sinr: float
    no_interference: bool
    clamped: int
    tagged: int
    scheduled: np.ndarray = field(repr=False)


def _users(config, lx, ly, rng):
    n = rng.poisson(config.deploy.lambda_u * lx * ly)
    return rng.uniform(0.0, lx, n), rng.uniform(0.0, ly, n)


def sample_network(config, rng):
    """PPP stations and users on the square window; empty station draws are redrawn."""
    L = config.window_side
    mean_bs = config.deploy.lambda_b * L * L
    resamples = 0
    n_bs = rng.poisson(mean_bs)
    while n_bs == 0:
        resamples += 1
        if resamples > MAX_RESAMPLES:
            raise RuntimeError(f"no BS sampled in {MAX_RESAMPLES} attempts")
        n_bs = rng.poisson(mean_bs)
    bx = rng.uniform(0.0, L, n_bs)
    by = rng.uniform(0.0, L, n_bs)
    ux, uy = _users(config, L, L, rng)
    return Realization(bx, by, ux, uy, L, L, resamples)


@dataclass(frozen=True)
class HexGrid:
    """Triangular lattice dimensions that tile a rectangular torus exactly."""

    spacing: float
    nx: int
    ny: int

    @property
    def row_height(self):
        return self.spacing * math.sqrt(3.0) / 2.0

    @property
    def lx(self):
        return self.nx * self.spacing

    @property
    def ly(self):
        return self.ny * self.row_height

    def density_correction(self, window_side):
        """Area actually simulated divided by the requested square window."""
        return self.lx * self.ly / window_side**2


def hex_grid(lambda_b, window_side):
    """Pick the lattice closest to the requested window.

    Each hexagonal cell has area ``1/lambda_b``.  The row count is forced
    even so the staggered rows wrap consistently; the torus becomes the
    rectangle ``lx x ly`` near the requested square, which keeps the
    station density exact.
    """
    d = math.sqrt(2.0 / (math.sqrt(3.0) * lambda_b))
    nx = max(1, round(window_side / d))
    ny = max(2, 2 * round(window_side / (d * math.sqrt(3.0))))
    return HexGrid(d, nx, ny)


def hex_layout(config, rng):
    """Hexagonal stations with a uniform random shift, PPP users."""
    grid = hex_grid(config.deploy.lambda_b, config.window_side)
    j, i = np.divmod(np.arange(grid.nx * grid.ny), grid.nx)
    x = (i + 0.5 * (j % 2)) * grid.spacing
    y = j * grid.row_height
    lx, ly = grid.lx, grid.ly
    bx = np.mod(x + rng.uniform(0.0, lx), lx)
    by = np.mod(y + rng.uniform(0.0, ly), ly)
    # np.mod can return the period itself for tiny negative inputs.
    bx[bx >= lx] = 0.0
    by[by >= ly] = 0.0
    ux, uy = _users(config, lx, ly, rng)
    return Realization(bx, by, ux, uy, lx, ly)


def draw_realization(config, rng):
    if config.layout == "hexagonal":
        return hex_layout(config, rng)
    return sample_network(config, rng)


def associate_and_activate(realization):
    """Nearest-station association and the resulting activity pattern."""
    r = realization
    if r.n_bs == 0:
        raise ValueError("realization has no stations")
    if r.n_users == 0:
        empty = np.zeros(r.n_bs, dtype=np.int64)
        return CellMap(np.empty(0, dtype=np.int64), np.empty(0), empty,
                       np.zeros(r.n_bs, dtype=np.uint8))
    serving, dist2 = _kernels.nearest_station(r.bx, r.by, r.ux, r.uy, r.lx, r.ly)
    load = np.bincount(serving, minlength=r.n_bs)
    return CellMap(serving, dist2, load, (load > 0).astype(np.uint8))


def _complex_gaussian(rng, shape):
    # Unit-variance circularly symmetric: each component has variance 1/2.
    z = rng.standard_normal(shape + (2,)) * math.sqrt(0.5)
    return z[..., 0] + 1j * z[..., 1]


def sample_gains(rng, M, n_interferers, sampling):
    """Serving gain and interferer gains under MRT with Rayleigh fading.

    ``marginal`` draws the known distributions directly (Gamma(M, 1) and
    Exp(1)); ``vector`` builds the channel vectors and precoders.
    """
    if sampling == "marginal":
        return rng.standard_gamma(M), rng.standard_exponential(n_interferers)
    h00 = _complex_gaussian(rng, (M,))
    g00 = float(np.vdot(h00, h00).real)
    h_cross = _complex_gaussian(rng, (n_interferers, M))
    h_own = _complex_gaussian(rng, (n_interferers, M))
    w = h_own / np.linalg.norm(h_own, axis=1, keepdims=True)
    g = np.abs(np.sum(np.conj(h_cross) * w, axis=1)) ** 2
    return g00, g


def run_trial(realization, cells, rng, config):
    """SINR of a uniformly chosen user.

    Raises:
        NoTaggedUser: The realization has no users.
    """
    r = realization
    if r.n_users == 0:
        raise NoTaggedUser("no users in the window")
    alpha = config.channel.alpha
    u = int(rng.integers(r.n_users))
    b0 = int(cells.serving[u])
    x0, y0 = float(r.ux[u]), float(r.uy[u])
    pathloss, clamped = _kernels.interference_pathloss(
        r.bx, r.by, cells.active, b0, x0, y0, r.lx, r.ly, alpha)
    # Each other active cell serves one of its own users this slot.
    others = np.flatnonzero(cells.active)
    others = others[others != b0]
    scheduled = rng.integers(0, cells.load[others])

    d2 = float(cells.dist2[u])
    if d2 < 1.0:
        d2 = 1.0
        clamped += 1
    g00, g = sample_gains(rng, config.channel.M, len(pathloss), config.channel_sampling)
    P_t = config.power.P_t
    signal = P_t * g00 * d2 ** (-0.5 * alpha)
    denom = P_t * float(np.dot(g, pathloss)) + config.noise_power
    if denom > 0:
        return TrialOutcome(signal / denom, False, clamped, u, scheduled)
    return TrialOutcome(math.inf, True, clamped, u, scheduled)


@dataclass
class Tally:
    """Additive counters; merging is order independent."""

    trials: int = 0
    successes: int = 0
    sinr_db_sum: float = 0.0
    finite_sinr: int = 0
    bs_observations: int = 0
    active_observations: int = 0
    zero_bs_resamples: int = 0
    empty_user_realizations: int = 0
    clamped_distances: int = 0
    no_interference_samples: int = 0

    def merge(self, other):
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self


def batch_rng(seed, batch):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(batch,))))


def run_batch(config, batch, n_trials):
    """Run ``n_trials`` trials on batch ``batch``'s private stream."""
    rng = batch_rng(config.seed, batch)
    tally = Tally()
    gamma = config.channel.gamma_hat
    while tally.trials < n_trials:
        real = draw_realization(config, rng)
        cells = associate_and_activate(real)
        tally.zero_bs_resamples += real.resamples
        tally.bs_observations += real.n_bs
        tally.active_observations += cells.n_active
        try:
            out = run_trial(real, cells, rng, config)
        except NoTaggedUser:
            tally.empty_user_realizations += 1
            continue
        tally.trials += 1
        tally.clamped_distances += out.clamped
        if out.sinr > gamma:
            tally.successes += 1
        if math.isinf(out.sinr):
            tally.no_interference_samples += 1
        else:
            tally.sinr_db_sum += 10.0 * math.log10(out.sinr)
            tally.finite_sinr += 1
    return tally


def wilson_interval(successes, n, confidence=0.95):
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("need at least one observation")
    z = norm.ppf(0.5 + confidence / 2.0)
    p = successes / n
    z2n = z * z / n
    centre = (p + z2n / 2.0) / (1.0 + z2n)
    half = z * math.sqrt(p * (1.0 - p) / n + z2n / (4.0 * n)) / (1.0 + z2n)
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class SimEstimate:
    p_s_hat: float
    p_a_hat: float
    ci_half_width_95: float
    trials_used: int
    mean_sinr_db: float
    successes: int
    bs_observations: int
    active_observations: int
    zero_bs_resamples: int = 0
    empty_user_realizations: int = 0
    clamped_distances: int = 0
    no_interference_samples: int = 0
    density_correction: float = 1.0
    backend: str = _kernels.BACKEND

    def ps_interval(self, confidence=0.95):
        return wilson_interval(self.successes, self.trials_used, confidence)

    def pa_interval(self, confidence=0.95):
        return wilson_interval(self.active_observations, self.bs_observations, confidence)

    def energy_efficiency(self, power, M, r0):
        return energy_efficiency(self.p_a_hat, self.p_s_hat, r0, power, M)

    def as_dict(self):
        return dict(self.__dict__)


def _batch_plan(config):
    n_full, rest = divmod(config.trials, config.batch_size)
    plan = [(b, config.batch_size) for b in range(n_full)]
    if rest:
        plan.append((n_full, rest))
    return plan


def _run_planned(args):
    return run_batch(*args)


def estimate(config, workers=1):
    """Monte Carlo estimate of success and activity probabilities.

    Args:
        config: The run description.
        workers: Processes to spread batches over; does not affect results.
    """
    plan = [(config, b, n) for b, n in _batch_plan(config)]
    if workers > 1 and len(plan) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            tallies = list(pool.map(_run_planned, plan))
    else:
        tallies = [_run_planned(p) for p in plan]
    total = Tally()
    for t in tallies:
        total.merge(t)
    lo, hi = wilson_interval(total.successes, total.trials, 0.95)
    correction = 1.0
    if config.layout == "hexagonal":
        grid = hex_grid(config.deploy.lambda_b, config.window_side)
        correction = grid.density_correction(config.window_side)
    mean_db = total.sinr_db_sum / total.finite_sinr if total.finite_sinr else math.inf
    return SimEstimate(
        p_s_hat=total.successes / total.trials,
        p_a_hat=total.active_observations / total.bs_observations,
        ci_half_width_95=(hi - lo) / 2.0,
        trials_used=total.trials,
        mean_sinr_db=mean_db,
        successes=total.successes,
        bs_observations=total.bs_observations,
        active_observations=total.active_observations,
        zero_bs_resamples=total.zero_bs_resamples,
        empty_user_realizations=total.empty_user_realizations,
        clamped_distances=total.clamped_distances,
        no_interference_samples=total.no_interference_samples,
        density_correction=correction,
    )


def simulated_energy_efficiency(est, config):
    return est.energy_efficiency(config.power, config.channel.M, rate_r0(config.channel.gamma_hat))
