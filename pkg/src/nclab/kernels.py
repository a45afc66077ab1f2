"""Matrix kernel of the pfaffian process and multi-time correlation functions.

All kernel evaluators take observation *times* (not partition indices) and
broadcast over position arrays, so ``k.d(s, x[:, None], t, y[None, :])``
returns a full grid.  The finite-rank parts D, S and I are pair sums over the
first N/2 (even, odd) basis pairs weighted by 1 / r_i; the corrected kernels
use closed-form heat-kernel and error-function terms instead of the
infinite tail series, which is kept only as a cross-check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .basis import BasisContext
from .errors import NumericalFlag
from .skewlin import pfaffian, skew_matrix
from .stochastic import TimePartition, heat_kernel

__all__ = [
    "CorrelationKernel",
    "CorrelationQuery",
    "SeriesValue",
    "kernel_d",
    "kernel_s",
    "kernel_i",
    "kernel_s_tilde",
    "kernel_i_tilde",
    "assemble_a",
    "correlation",
]

ASSEMBLY_SKEW_TOL = 1e-9
CLAMP_EPS = 1e-12
TAIL_SAFETY = 10.0


def _pair_sum(a, b, weights, lo, hi):
    """sum_{lo <= i < hi} w_i (a_{2i} b_{2i+1} - a_{2i+1} b_{2i})."""
    total = 0.0
    for i in range(lo, hi):
        total = total + weights[i] * (a[2 * i] * b[2 * i + 1] - a[2 * i + 1] * b[2 * i])
    return total


def _pair_terms(a, b, weights, lo, hi):
    return np.stack(
        [weights[i] * (a[2 * i] * b[2 * i + 1] - a[2 * i + 1] * b[2 * i]) for i in range(lo, hi)]
    )


@dataclass(frozen=True)
class SeriesValue:
    """Truncated tail series with an a-posteriori bound on the neglected remainder."""

    value: np.ndarray
    tail_bound: np.ndarray


class CorrelationKernel:
    """The 2x2 matrix kernel for N particles on a time partition.

    ``truncation`` is the number of basis pairs K used by the tail-series
    cross-checks (default N/2 + 20); the kernel itself only needs N/2.
    """

    def __init__(self, n, partition: TimePartition, truncation=None):
        if n < 2 or n % 2:
            raise ValueError(f"N must be a positive even integer, got {n}")
        self.partition = partition
        k = n // 2 + 20 if truncation is None else int(truncation)
        if k < n // 2:
            raise ValueError(f"truncation K={k} must be at least N/2={n // 2}")
        self.truncation = k
        self.ctx = BasisContext(n, partition.horizon, partition.first, spare=k - n // 2)
        self._w = 1.0 / self.ctx.r

    @property
    def n(self):
        return self.ctx.n

    @property
    def horizon(self):
        return self.ctx.horizon

    def time(self, mu):
        """Observation time of partition index ``mu`` (0-based)."""
        return self.partition[mu]

    def _r(self, t, x, pairs):
        return self.ctx.r_table(t, x, 2 * pairs - 1)

    def _phi(self, t, x, pairs):
        return self.ctx.phi_table(t, x, 2 * pairs - 1)

    # finite-rank parts

    def d(self, s, x, t, y):
        h = self.n // 2
        return _pair_sum(self._r(s, x, h), self._r(t, y, h), self._w, 0, h)

    def s(self, s, x, t, y):
        h = self.n // 2
        return _pair_sum(self._phi(s, x, h), self._r(t, y, h), self._w, 0, h)

    def i(self, s, x, t, y):
        h = self.n // 2
        return -_pair_sum(self._phi(s, x, h), self._phi(t, y, h), self._w, 0, h)

    # closed-form corrections

    def w(self, s, x, t, y):
        """Heat-propagated sgn pairing int int p_{T-s}(x,z) sgn(w-z) p_{T-t}(y,w) dz dw."""
        var = 2 * self.horizon - s - t
        gap = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        if var <= 1e-14 * self.horizon:
            return np.sign(gap)
        return erf(gap / math.sqrt(2 * var))

    def s_tilde(self, s, x, t, y):
        val = self.s(s, x, t, y)
        if s < t:
            val = val - heat_kernel(t - s, x, y)
        return val

    def i_tilde(self, s, x, t, y):
        return self.i(s, x, t, y) + self.w(s, x, t, y)

    def density(self, t, x):
        """One-point density at time t: the diagonal of S-tilde."""
        return self.s_tilde(t, x, t, x)

    # tail-series cross-checks

    def _bound(self, terms):
        mags = np.abs(terms)
        last = np.max(mags[-3:], axis=0)
        prev = np.max(mags[-6:-3], axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(prev > 0, (last / prev) ** (1.0 / 3.0), 0.0)
        q = np.minimum(q, 0.999)
        return TAIL_SAFETY * last * q / (1.0 - q) + 1e-12 * (1.0 + np.max(mags, axis=0))

    def s_tilde_series(self, s, x, t, y):
        """S-tilde from the basis pairs beyond N/2 (valid for s < t; equals S for s >= t)."""
        h, k = self.n // 2, self.truncation
        if s >= t:
            val = self.s(s, x, t, y)
            return SeriesValue(val, np.zeros_like(val))
        if k - h < 6:
            raise ValueError("tail series needs at least 6 extra pairs")
        terms = _pair_terms(self._phi(s, x, k), self._r(t, y, k), self._w, h, k)
        return SeriesValue(-terms.sum(axis=0), self._bound(terms))

    def i_tilde_series(self, s, x, t, y):
        """I-tilde from the basis pairs beyond N/2; diverges when s = t = T."""
        h, k = self.n // 2, self.truncation
        if k - h < 6:
            raise ValueError("tail series needs at least 6 extra pairs")
        terms = _pair_terms(self._phi(s, x, k), self._phi(t, y, k), self._w, h, k)
        return SeriesValue(terms.sum(axis=0), self._bound(terms))

    # point-set evaluation

    def _point_tables(self, times, xs):
        h = self.n // 2
        r = np.empty((2 * h, xs.size))
        phi = np.empty((2 * h, xs.size))
        for t in np.unique(times):
            sel = times == t
            r[:, sel] = self._r(t, xs[sel], h)
            phi[:, sel] = self._phi(t, xs[sel], h)
        return r, phi

    def blocks(self, times, xs):
        """D, S-tilde and I-tilde matrices over a list of (time, position) points."""
        times = np.asarray(times, dtype=float)
        xs = np.asarray(xs, dtype=float)
        h = self.n // 2
        r, phi = self._point_tables(times, xs)
        rc, rr = r[:, :, None], r[:, None, :]
        pc, pr = phi[:, :, None], phi[:, None, :]
        d = _pair_sum(rc, rr, self._w, 0, h)
        s = _pair_sum(pc, rr, self._w, 0, h)
        i = -_pair_sum(pc, pr, self._w, 0, h)
        ta, tb = times[:, None], times[None, :]
        xa, xb = xs[:, None], xs[None, :]
        later = ta < tb
        if later.any():
            step = np.where(later, tb - ta, 1.0)
            s = s - np.where(later, heat_kernel(step, xa, xb), 0.0)
        var = 2 * self.horizon - ta - tb
        at_end = var <= 1e-14 * self.horizon
        gap = xb - xa
        w = np.where(at_end, np.sign(gap), erf(gap / np.sqrt(2 * np.where(at_end, 1.0, var))))
        return d, s, i + w


@dataclass(frozen=True)
class CorrelationQuery:
    """Observed points per time slice: ``points[mu]`` lists positions at ``partition[mu]``.

    Slices may be empty (those times are integrated out) and need not be
    ordered.  Coincident points in one slice are allowed and give zero.
    """

    partition: TimePartition
    points: tuple

    def __post_init__(self):
        pts = tuple(np.atleast_1d(np.asarray(p, dtype=float)).ravel() for p in self.points)
        if len(pts) != len(self.partition):
            raise ValueError(f"need one point list per time ({len(self.partition)}), got {len(pts)}")
        for p in pts:
            if not np.all(np.isfinite(p)):
                raise ValueError("query positions must be finite")
        object.__setattr__(self, "points", pts)

    @classmethod
    def single(cls, partition, mu, x):
        pts = [()] * len(partition)
        pts[mu] = np.atleast_1d(x)
        return cls(partition, tuple(pts))

    @property
    def sizes(self):
        return tuple(p.size for p in self.points)

    def flat(self):
        """Times and positions of all points, slice by slice."""
        times = np.concatenate([np.full(p.size, t) for t, p in zip(self.partition, self.points)])
        xs = np.concatenate(self.points) if self.points else np.zeros(0)
        return times, xs


def _slice_index(kernel, mu):
    if not 0 <= mu < len(kernel.partition):
        raise IndexError(f"time index {mu} outside partition of length {len(kernel.partition)}")
    return kernel.time(mu)


def kernel_d(kernel: CorrelationKernel, mu, x, nu, y):
    return kernel.d(_slice_index(kernel, mu), x, _slice_index(kernel, nu), y)


def kernel_s(kernel: CorrelationKernel, mu, x, nu, y):
    return kernel.s(_slice_index(kernel, mu), x, _slice_index(kernel, nu), y)


def kernel_i(kernel: CorrelationKernel, mu, x, nu, y):
    return kernel.i(_slice_index(kernel, mu), x, _slice_index(kernel, nu), y)


def kernel_s_tilde(kernel: CorrelationKernel, mu, x, nu, y):
    return kernel.s_tilde(_slice_index(kernel, mu), x, _slice_index(kernel, nu), y)


def kernel_i_tilde(kernel: CorrelationKernel, mu, x, nu, y):
    return kernel.i_tilde(_slice_index(kernel, mu), x, _slice_index(kernel, nu), y)


def assemble_a(kernel: CorrelationKernel, query: CorrelationQuery, tol=ASSEMBLY_SKEW_TOL):
    """Skew matrix of 2x2 blocks [[D(a,b), S~(b,a)], [-S~(a,b), -I~(a,b)]] over all points."""
    if query.partition != kernel.partition:
        raise ValueError("query and kernel use different time partitions")
    if any(k > kernel.n for k in query.sizes):
        raise ValueError(f"a slice has more than N={kernel.n} points")
    times, xs = query.flat()
    d, s, i = kernel.blocks(times, xs)
    m = xs.size
    a = np.empty((2 * m, 2 * m))
    a[0::2, 0::2] = d
    a[0::2, 1::2] = s.T
    a[1::2, 0::2] = -s
    a[1::2, 1::2] = -i
    return skew_matrix(a, tol=tol)


def correlation(kernel: CorrelationKernel, query: CorrelationQuery):
    """Multi-time correlation function as the pfaffian of the assembled kernel matrix.

    Values in (-1e-12, 0) are rounding noise and are returned as 0 with a
    :class:`NumericalFlag` warning.
    """
    value = float(pfaffian(assemble_a(kernel, query), check=False))
    if -CLAMP_EPS < value < 0:
        warnings.warn(f"correlation {value:.3g} clamped to 0", NumericalFlag, stacklevel=2)
        value = 0.0
    return value
