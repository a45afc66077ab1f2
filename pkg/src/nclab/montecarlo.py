"""Monte Carlo sampler for the non-colliding system on [0, T].

A path starts at time delta from the exact delta-marginal (random-walk
Metropolis on the ordered configurations), then free Brownian increments
are applied on a grid of step dt up to T.  Any ordering violation, either
observed at a grid point or drawn from the Brownian-bridge probability of
an intra-step crossing, sends the path back to its own start; the retained
path is then a draw of the process conditioned on survival up to T.

Randomness is organised in fixed-size blocks of paths, each with its own
Philox stream keyed by (seed, block index), so results do not depend on
the number of worker threads.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NumericalFlag
from .stochastic import initial_transition_density

__all__ = [
    "SimulationConfig",
    "PathSample",
    "EnsembleEstimate",
    "block_rng",
    "sample_initial",
    "propagate_conditioned",
    "simulate",
    "estimate_onepoint",
    "estimate_twotime",
]

log = logging.getLogger(__name__)

MAX_REJECTIONS = 1_000_000
ACCEPTANCE_RANGE = (0.1, 0.7)
GRID_TOL = 1e-9


@dataclass(frozen=True)
class SimulationConfig:
    """Sampler settings: N particles on [0, T], warm-up time delta, grid step dt."""

    n: int = 2
    horizon: float = 1.0
    delta: float = 0.05
    dt: float = 0.005
    paths: int = 100_000
    seed: int = 20261016
    burn_in: int = 1000
    proposal_scale: float = 0.7
    block_size: int = 4096

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise ValueError(f"N must be a positive even integer, got {self.n}")
        if not 0 < self.delta < self.horizon:
            raise ValueError("need 0 < delta < T")
        if self.delta > 0.25 * self.horizon:
            raise ValueError("warm-up time delta must be small compared with T (delta <= T/4)")
        if not 0 < self.dt <= self.delta / 10 * (1 + 1e-12):
            raise ValueError("need 0 < dt <= delta / 10")
        if self.paths < 1:
            raise ValueError("need at least one path")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.burn_in < 1000:
            raise ValueError("Metropolis burn-in must be at least 1000 steps")
        if self.block_size < 1:
            raise ValueError("block size must be positive")

    @property
    def steps(self):
        """Number of grid steps from delta to T."""
        return max(1, int(round((self.horizon - self.delta) / self.dt)))

    @property
    def grid(self):
        return np.linspace(self.delta, self.horizon, self.steps + 1)

    def grid_index(self, t):
        """Index of time t on the propagation grid (must lie on it)."""
        k = (t - self.delta) / (self.horizon - self.delta) * self.steps
        idx = int(round(k))
        if not 0 <= idx <= self.steps or abs(k - idx) > GRID_TOL * self.steps:
            raise ValueError(f"time {t} is not on the simulation grid [delta, T] with step {self.dt}")
        return idx


def block_rng(seed, block):
    """Independent counter-based generator for one block of paths."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def _log_target(config, y):
    with np.errstate(divide="ignore"):
        return np.log(initial_transition_density(config.delta, y, config.horizon))


def sample_initial(config: SimulationConfig, size, rng):
    """Draws from the delta-marginal of the process started at the origin.

    Each draw is the end state of its own random-walk Metropolis chain of
    ``burn_in`` steps; proposals are sorted back into increasing order (the
    sorted Gaussian proposal stays symmetric).  Returns the (size, N) draws
    and the mean acceptance rate.
    """
    n, scale = config.n, math.sqrt(config.delta)
    x = np.sort(rng.standard_normal((size, n)) * scale, axis=1)
    logp = _log_target(config, x)
    accepted = 0
    step = config.proposal_scale * scale
    for _ in range(config.burn_in):
        prop = np.sort(x + step * rng.standard_normal((size, n)), axis=1)
        logq = _log_target(config, prop)
        take = np.log(rng.random(size)) < logq - logp
        x[take] = prop[take]
        logp[take] = logq[take]
        accepted += int(take.sum())
    rate = accepted / (size * config.burn_in)
    lo, hi = ACCEPTANCE_RANGE
    if not lo <= rate <= hi:
        warnings.warn(f"Metropolis acceptance rate {rate:.3f} outside [{lo}, {hi}]", NumericalFlag, stacklevel=2)
    return x, rate


def propagate_conditioned(start, config: SimulationConfig, rng, record=None):
    """Propagate each start to T, restarting from the same start on any collision.

    ``record`` lists grid indices whose positions are kept (default: the
    final time).  Returns positions of shape (P, len(record), N) and the
    number of attempts per path.  Works for any particle count, including 1.
    """
    start = np.atleast_2d(np.asarray(start, dtype=float))
    if np.any(np.diff(start, axis=1) <= 0):
        raise ValueError("start configurations must be strictly increasing")
    p, n = start.shape
    steps = config.steps
    dt = (config.horizon - config.delta) / steps
    record = np.asarray([steps] if record is None else record, dtype=int)
    slot = np.full(steps + 1, -1)
    slot[record] = np.arange(record.size)
    out = np.empty((p, record.size, n))
    if slot[0] >= 0:
        out[:, slot[0]] = start
    attempts = np.ones(p, dtype=np.int64)
    pos = start.copy()
    k = np.zeros(p, dtype=int)
    active = np.arange(p)
    sd = math.sqrt(dt)
    while active.size:
        x = pos[active]
        new = x + sd * rng.standard_normal(x.shape)
        u = rng.random((active.size, max(n - 1, 1)))
        if n > 1:
            g0 = np.diff(x, axis=1)
            g1 = np.diff(new, axis=1)
            # the gap of two independent Brownian motions has variance 2 dt per step
            crossed = u[:, : n - 1] < np.exp(-np.clip(g0 * g1, 0.0, None) / dt)
            dead = np.any(g1 <= 0, axis=1) | np.any(crossed, axis=1)
        else:
            dead = np.zeros(active.size, dtype=bool)
        live, died = active[~dead], active[dead]
        pos[live] = new[~dead]
        k[live] += 1
        s = slot[k[live]]
        hit = s >= 0
        out[live[hit], s[hit]] = pos[live[hit]]
        if died.size:
            pos[died] = start[died]
            k[died] = 0
            attempts[died] += 1
            if attempts[died].max() > MAX_REJECTIONS:
                raise RuntimeError(
                    "more than 1e6 rejections for one start; conditioning too severe, increase delta"
                )
        active = active[k[active] < steps]
    return out, attempts


@dataclass(frozen=True)
class PathSample:
    """Positions of every path at the recorded times; attempts counts restarts + 1."""

    times: np.ndarray
    positions: np.ndarray
    attempts: np.ndarray
    acceptance: float

    @property
    def paths(self):
        return self.positions.shape[0]

    def at(self, t):
        idx = np.flatnonzero(np.abs(self.times - t) <= GRID_TOL * max(1.0, abs(t)))
        if idx.size == 0:
            raise ValueError(f"time {t} was not recorded (recorded: {self.times})")
        return self.positions[:, idx[0]]


def _run_block(config, block, size, record):
    rng = block_rng(config.seed, block)
    start, rate = sample_initial(config, size, rng)
    pos, attempts = propagate_conditioned(start, config, rng, record)
    return pos, attempts, rate


def simulate(config: SimulationConfig, times, threads=None):
    """Sample ``config.paths`` conditioned paths, recording positions at ``times``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    record = np.array([config.grid_index(t) for t in times])
    grid = config.grid
    sizes = [
        min(config.block_size, config.paths - b * config.block_size)
        for b in range(-(-config.paths // config.block_size))
    ]
    workers = max(1, int(threads or 1))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NumericalFlag)
        if workers == 1:
            results = [_run_block(config, b, s, record) for b, s in enumerate(sizes)]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda bs: _run_block(config, bs[0], bs[1], record), enumerate(sizes)))
    for w in caught[:1]:
        warnings.warn(str(w.message), NumericalFlag, stacklevel=2)
    positions = np.concatenate([r[0] for r in results])
    attempts = np.concatenate([r[1] for r in results])
    rate = float(np.average([r[2] for r in results], weights=sizes))
    log.info("simulated %d paths, mean attempts %.2f", config.paths, attempts.mean())
    return PathSample(grid[record], positions, attempts, rate)


@dataclass(frozen=True)
class EnsembleEstimate:
    """Per-bin (or per-box) estimates with standard errors.

    ``lower``/``upper`` hold bin edges for histograms; for two-time boxes
    they hold the (a, b) box corners as arrays of shape (K, 2).
    """

    lower: np.ndarray
    upper: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    paths: int


def estimate_onepoint(sample: PathSample, t, bins):
    """Histogram density of all particle positions at time t, per path.

    Normalised so the integral over the bins is N times the fraction of
    particles inside them (N when the bins cover every sample).
    """
    edges = np.asarray(bins, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be increasing")
    x = sample.at(t)
    p, n = x.shape
    idx = np.searchsorted(edges, x, side="right") - 1
    idx[(x == edges[-1])] = edges.size - 2
    inside = (idx >= 0) & (idx < edges.size - 1)
    counts = np.zeros((p, edges.size - 1))
    rows = np.repeat(np.arange(p), n).reshape(p, n)
    np.add.at(counts, (rows[inside], idx[inside]), 1.0)
    width = np.diff(edges)
    per_path = counts / width
    values = per_path.mean(axis=0)
    stderr = per_path.std(axis=0, ddof=1) / math.sqrt(p) if p > 1 else np.full_like(values, np.inf)
    return EnsembleEstimate(edges[:-1], edges[1:], values, stderr, p)


def _count(x, lo, hi):
    return np.sum((x >= lo) & (x < hi), axis=1)


def estimate_twotime(sample: PathSample, t_a, t_b, boxes):
    """Mean of n_A(t_a) * n_B(t_b) over paths for boxes ((a_lo, a_hi), (b_lo, b_hi)).

    For t_a < t_b this estimates the integral of the two-time correlation
    function over A x B.
    """
    if not t_a < t_b:
        raise ValueError("need t_a < t_b")
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 2, 2)
    xa, xb = sample.at(t_a), sample.at(t_b)
    p = xa.shape[0]
    vals, errs = [], []
    for (a_lo, a_hi), (b_lo, b_hi) in boxes:
        prod = _count(xa, a_lo, a_hi) * _count(xb, b_lo, b_hi)
        vals.append(prod.mean())
        errs.append(prod.std(ddof=1) / math.sqrt(p) if p > 1 else np.inf)
    return EnsembleEstimate(boxes[:, :, 0], boxes[:, :, 1], np.array(vals), np.array(errs), p)
