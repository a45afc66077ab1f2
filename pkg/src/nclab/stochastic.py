"""Heat kernels, Karlin-McGregor determinants and densities of the non-colliding system.

Positions are plain arrays.  Functions taking a configuration accept either a
single configuration of shape ``(n,)`` or a stack ``(..., n)``; stacked input
is evaluated without per-call validation or warnings (used by the oracles and
the sampler).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, gammaln

from .errors import DimensionError, IllConditionedError, NumericalFlag
from .quadrature import QuadratureSpec, ordered_rule, uniform_breaks
from .skewlin import pfaffian

__all__ = [
    "TimePartition",
    "as_ordered",
    "heat_kernel",
    "km_determinant",
    "survival_probability",
    "survival_entry",
    "vandermonde",
    "transition_density",
    "initial_constant",
    "initial_transition_density",
    "multitime_density",
    "correlation_bruteforce",
    "expectation_bruteforce",
]

UNDERFLOW = 1e-300
MAX_ORACLE_DIM = 4
MAX_ORACLE_N = 4


@dataclass(frozen=True)
class TimePartition:
    """Observation times 0 < t_1 < ... < t_{M+1} = T."""

    times: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if not times:
            raise ValueError("a partition needs at least one time")
        if times[0] <= 0:
            raise ValueError("observation times must be positive")
        if any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise ValueError(f"observation times must increase strictly: {times}")
        object.__setattr__(self, "times", times)

    @classmethod
    def single(cls, horizon):
        return cls((horizon,))

    @property
    def horizon(self):
        return self.times[-1]

    @property
    def first(self):
        return self.times[0]

    @property
    def m(self):
        """Number of intermediate times (M)."""
        return len(self.times) - 1

    def __len__(self):
        return len(self.times)

    def __iter__(self):
        return iter(self.times)

    def __getitem__(self, i):
        return self.times[i]


def as_ordered(x, name="configuration"):
    """Validate a strictly increasing configuration and return it as a float array."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d sequence")
    if np.any(np.diff(x) <= 0):
        raise ValueError(f"{name} must be strictly increasing (Weyl chamber): {x}")
    return x


def heat_kernel(t, x, y):
    """Gaussian transition density p_t(x, y) = exp(-(x-y)^2 / 2t) / sqrt(2 pi t)."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("heat kernel needs t > 0; p_0 is a delta and must be handled analytically")
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return np.exp(-0.5 * d * d / t) / np.sqrt(2.0 * np.pi * t)


def km_determinant(t, x, y):
    """Karlin-McGregor determinant det[p_t(x_i, y_j)]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"size mismatch: {x.shape[-1]} vs {y.shape[-1]} particles")
    if x.shape[-1] == 0:
        raise ValueError("need at least one particle")
    return np.linalg.det(heat_kernel(t, x[..., :, None], y[..., None, :]))


def vandermonde(x):
    """prod_{i<j} (x_j - x_i), over the last axis."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    out = np.ones(x.shape[:-1])
    for i in range(n):
        for j in range(i + 1, n):
            out = out * (x[..., j] - x[..., i])
    return out[()]


def survival_entry(gap, t):
    """Pairwise de Bruijn entry for p_t(x_i, .), p_t(x_j, .): erf((x_j - x_i) / (2 sqrt t))."""
    return erf(np.asarray(gap, dtype=float) / (2.0 * np.sqrt(t)))


def _survival(t, x):
    n = x.shape[-1]
    if n % 2:
        raise NotImplementedError("survival probability is implemented for even N only")
    gaps = x[..., None, :] - x[..., :, None]
    m = survival_entry(gaps, t)
    if n == 2:
        return m[..., 0, 1]
    return pfaffian(m, check=False)


def survival_probability(t, x):
    """Probability that N Brownian motions started at x do not collide up to time t.

    Computed as the pfaffian of the pairwise de Bruijn entries; even N only.
    """
    if t <= 0:
        raise ValueError("survival probability needs t > 0")
    x = as_ordered(x)
    if x.size % 2:
        raise NotImplementedError("survival probability is implemented for even N only")
    return float(_survival(t, x))


def initial_constant(n, horizon, t):
    """C(N, T, t) of the |x| -> 0 limit density."""
    if t <= 0:
        raise ValueError("need t > 0")
    log_c = (
        0.5 * n * math.log(math.pi)
        - sum(gammaln(j / 2.0) for j in range(1, n + 1))
        + 0.25 * n * (n - 1) * math.log(horizon)
        - 0.5 * n * (n - 1) * math.log(t)
    )
    return math.exp(log_c)


def _flush(value, what):
    if 0 < abs(value) < UNDERFLOW:
        warnings.warn(f"{what} below {UNDERFLOW:g}; reported as 0", NumericalFlag, stacklevel=3)
        return 0.0
    return float(value)


def transition_density(s, x, t, y, horizon):
    """g_{N,T}(s, x; t, y): the conditioned transition density from x at s to y at t."""
    if not 0 < s < t <= horizon:
        raise ValueError(f"need 0 < s < t <= T, got s={s}, t={t}, T={horizon}")
    x = as_ordered(x, "x")
    y = as_ordered(y, "y")
    if x.size != y.size:
        raise ValueError("x and y must have the same number of particles")
    denom = _survival(horizon - s, x)
    if not denom > UNDERFLOW:
        raise IllConditionedError(
            f"survival probability from x over {horizon - s:g} underflows ({denom:.3g})"
        )
    tail = 1.0 if t == horizon else _survival(horizon - t, y)
    return _flush(km_determinant(t - s, x, y) * tail / denom, "transition density")


def _initial_density(t, y, horizon):
    n = y.shape[-1]
    dens = initial_constant(n, horizon, t) * vandermonde(y) * np.prod(heat_kernel(t, 0.0, y), axis=-1)
    if t < horizon:
        dens = dens * _survival(horizon - t, y)
    return dens


def initial_transition_density(t, y, horizon, n=None):
    """g_{N,T}(0, 0; t, y): density at time t of the system started at the origin."""
    if not 0 < t <= horizon:
        raise ValueError(f"need 0 < t <= T, got t={t}, T={horizon}")
    y = np.asarray(y, dtype=float)
    if n is not None and y.shape[-1] != n:
        raise ValueError(f"expected {n} particles, got {y.shape[-1]}")
    if y.shape[-1] % 2:
        raise NotImplementedError("even N only")
    if y.ndim == 1:
        if np.any(np.diff(y) < 0):
            raise ValueError("y must be ordered")
        return _flush(_initial_density(t, y, horizon), "initial density")
    return _initial_density(t, y, horizon)


def _multitime(times, configs):
    """Product form of the multi-time density; configs[mu] has shape (..., N)."""
    t1 = times[0]
    n = configs[0].shape[-1]
    out = initial_constant(n, times[-1], t1) * vandermonde(configs[0])
    out = out * np.prod(heat_kernel(t1, 0.0, configs[0]), axis=-1)
    for mu in range(len(times) - 1):
        out = out * km_determinant(times[mu + 1] - times[mu], configs[mu], configs[mu + 1])
    return out * np.sign(vandermonde(configs[-1]))


def multitime_density(partition, configs):
    """Joint density of the configurations observed at every time of the partition.

    Configurations may be unordered; the result is symmetric under
    relabelling within each time slice.
    """
    configs = [np.asarray(c, dtype=float) for c in configs]
    if len(configs) != len(partition):
        raise ValueError(f"need {len(partition)} configurations, got {len(configs)}")
    n = configs[0].shape[-1]
    if any(c.shape[-1] != n for c in configs):
        raise ValueError("every time slice needs the same number of particles")
    if n % 2:
        raise NotImplementedError("even N only")
    val = _multitime(partition.times, configs)
    if np.ndim(val) == 0:
        return float(val)
    return val


def _oracle_rules(partition, points, n, quad, extra=None):
    times = partition.times
    steps = [times[0]] + [b - a for a, b in zip(times[:-1], times[1:])]
    width = quad.panel_width * math.sqrt(min(steps))
    rules = []
    for mu, (t, fixed) in enumerate(zip(times, points)):
        k = n - fixed.size
        half = quad.window * math.sqrt(t) + (np.max(np.abs(fixed)) if fixed.size else 0.0)
        kinks = np.concatenate([fixed, np.asarray(extra[mu] if extra else (), dtype=float)])
        if kinks.size:
            half = max(half, float(np.max(np.abs(kinks))) + width)
        breaks = uniform_breaks(-half, half, width, extra=kinks)
        # the integrand is symmetric within a slice, so integrating the ordered
        # region counts each unordered configuration once; on the last slice
        # this also keeps the sgn(h) kink on cell boundaries
        nodes, weights = ordered_rule(k, breaks, quad.nodes)
        rules.append((nodes, weights))
    return rules


def _check_oracle(partition, points, n):
    if len(points) != len(partition):
        raise ValueError(f"need one point set per time ({len(partition)}), got {len(points)}")
    if n % 2:
        raise NotImplementedError("even N only")
    if any(p.size > n for p in points):
        raise ValueError("a slice has more points than particles")
    dim = sum(n - p.size for p in points)
    if n > MAX_ORACLE_N or dim > MAX_ORACLE_DIM:
        raise DimensionError(
            f"brute-force oracle limited to N <= {MAX_ORACLE_N} and {MAX_ORACLE_DIM} "
            f"integrated coordinates (got N={n}, {dim})"
        )


def _slice_integral(partition, points, n, quad, chunk, observable=None, extra=None):
    rules = _oracle_rules(partition, points, n, quad, extra)
    head_nodes, head_w = np.zeros((1, 0)), np.ones(1)
    for nodes, w in rules[:-1]:
        head_nodes = np.concatenate(
            [np.repeat(head_nodes, len(w), axis=0), np.tile(nodes, (len(head_w), 1))], axis=1
        )
        head_w = np.outer(head_w, w).ravel()
    last_nodes, last_w = rules[-1]
    sizes = [n - p.size for p in points]
    offsets = np.cumsum([0] + sizes[:-1])
    step = max(1, chunk // max(1, len(last_w)))
    total = 0.0
    for start in range(0, len(head_w), step):
        hn = head_nodes[start : start + step]
        hw = head_w[start : start + step]
        rows = len(hw) * len(last_w)
        configs = []
        for mu, fixed in enumerate(points):
            if mu < len(points) - 1:
                free = np.repeat(hn[:, offsets[mu] : offsets[mu] + sizes[mu]], len(last_w), axis=0)
            else:
                free = np.tile(last_nodes, (len(hw), 1))
            configs.append(np.concatenate([np.broadcast_to(fixed, (rows, fixed.size)), free], axis=1))
        weights = np.outer(hw, last_w).ravel()
        values = _multitime(partition.times, configs)
        if observable is not None:
            values = values * observable(configs)
        total = total + np.dot(weights, values)
    return total


def correlation_bruteforce(partition, points, n, quad=None, chunk=1_000_000):
    """Multi-time correlation function by direct integration of the joint density.

    ``points[mu]`` holds the N_mu observed positions at time ``partition[mu]``
    (possibly none); the remaining N - N_mu coordinates of each slice are
    integrated over the real line with weight 1/(N - N_mu)!.  Desk scale only:
    N <= 4 and at most four integrated coordinates in total.
    """
    quad = quad or QuadratureSpec()
    points = [np.atleast_1d(np.asarray(p, dtype=float)) for p in points]
    _check_oracle(partition, points, n)
    return float(_slice_integral(partition, points, n, quad, chunk))


def expectation_bruteforce(partition, n, observable, quad=None, breaks=None, chunk=1_000_000):
    """E[observable(X(t_1), ..., X(t_{M+1}))] by quadrature of the joint density.

    ``observable`` receives a list of stacked configurations (one ``(P, N)``
    array per time) and must be symmetric within each slice.  ``breaks[mu]``
    lists positions where it is not smooth.  Same size limits as
    :func:`correlation_bruteforce`; the result may be complex.
    """
    quad = quad or QuadratureSpec()
    points = [np.zeros(0) for _ in partition]
    _check_oracle(partition, points, n)
    return _slice_integral(partition, points, n, quad, chunk, observable, breaks)[()]
