"""Hermite-based skew-orthogonal functions for the non-colliding system.

For a partition with first time t1 and horizon T the polynomials

    M_k(x) = b_k z1^-k sum_j alpha_kj H_j(x / c1) z1^j

are propagated by the heat kernel to give R_k^(t)(x) (the transform into
the time-t position basis) and Phi_k^(t)(x) (the same after the sgn pairing
at T and a backward heat step).  Gaussian convolution of H_n(x / c) against
a matched Gaussian maps it to z^-n H_n(x / c') at the new time, so both
families have closed forms:

    R_k^(t)(x)   = kappa^k p_t(0, x) [z_t^k H_k(u) - [k odd] 2(k-1) z_t^(k-2) H_(k-2)(u)]
    Phi_k^(t)(x) = kappa^k / sqrt(2 pi) B_k(x)

with u = x / c_t, c_t = sqrt(t (2T - t) / T), z_t = sqrt((2T - t) / t),
kappa = t1 / (2 sqrt T), and B_k given by a two-term recursion seeded by an
error function.  Index ``k`` is the polynomial degree (0-based); the
leading coefficient of M_k is b_k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import hermite as H
from scipy.special import erf, gammaln

from .quadrature import QuadratureSpec, integrate_1d
from .stochastic import TimePartition, heat_kernel

__all__ = [
    "BasisContext",
    "hermite",
    "hermite_table",
    "alpha_coeff",
    "m_polynomial",
    "r_function",
    "phi_function",
    "skew_gram",
]

MIN_T1_FRACTION = 1e-8
DEFAULT_SPARE = 20


def hermite_table(n, x):
    """Physicists' Hermite polynomials H_0..H_n at x, shape (n+1, *x.shape)."""
    x = np.asarray(x, dtype=float)
    out = np.empty((n + 1,) + x.shape)
    out[0] = 1.0
    if n >= 1:
        out[1] = 2.0 * x
    for i in range(1, n):
        out[i + 1] = 2.0 * x * out[i] - 2.0 * i * out[i - 1]
    return out


def hermite(i, x):
    """H_i(x) by the three-term recurrence H_{i+1} = 2x H_i - 2i H_{i-1}."""
    if i < 0:
        raise ValueError("Hermite index must be non-negative")
    return hermite_table(i, x)[i][()]


def alpha_coeff(i, j, c1):
    """Coefficient of H_j(x / c1) z1^j in M_i (before b_i z1^-i)."""
    if not 0 <= j <= i:
        return 0.0
    base = (0.5 * c1) ** i
    if i % 2 == 0:
        return base if j == i else 0.0
    if j == i:
        return base
    if j == i - 2:
        return -2.0 * (i - 1) * base
    return 0.0


@dataclass(frozen=True)
class BasisContext:
    """Constants of the Hermite construction for N particles, first time t1 and horizon T.

    ``spare`` extra pairs of functions beyond N/2 are available for the
    truncated-series cross-checks.
    """

    n: int
    horizon: float
    t1: float
    spare: int = DEFAULT_SPARE
    _log_r: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise ValueError(f"N must be a positive even integer, got {self.n}")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not 0 < self.t1 <= self.horizon:
            raise ValueError(f"need 0 < t1 <= T, got t1={self.t1}, T={self.horizon}")
        if self.t1 < MIN_T1_FRACTION * self.horizon:
            raise ValueError("t1 too close to 0: z1 diverges")
        i = np.arange(self.pairs)
        log_r = (
            gammaln(i + 0.5)
            + gammaln(i + 1.0)
            + (2 * i + 0.5) * math.log(self.t1**2 / self.horizon)
            - math.log(math.pi)
        )
        if not np.all(np.isfinite(log_r)):
            raise OverflowError("normalisations r_i overflow for this basis size")
        log_r.setflags(write=False)
        object.__setattr__(self, "_log_r", log_r)

    @classmethod
    def for_partition(cls, n, partition: TimePartition, spare=DEFAULT_SPARE):
        return cls(n, partition.horizon, partition.first, spare)

    @property
    def pairs(self):
        """Number of (even, odd) function pairs available: N/2 + spare."""
        return self.n // 2 + self.spare

    @property
    def c1(self):
        return self.c(self.t1)

    @property
    def z1(self):
        return self.z(self.t1)

    @property
    def kappa(self):
        return self.t1 / (2.0 * math.sqrt(self.horizon))

    def c(self, t):
        """Length scale sqrt(t (2T - t) / T) at time t."""
        return math.sqrt(t * (2 * self.horizon - t) / self.horizon)

    def z(self, t):
        return math.sqrt((2 * self.horizon - t) / t)

    @cached_property
    def r(self):
        """r_0, r_1, ... up to N/2 + spare - 1."""
        out = np.exp(self._log_r)
        out.setflags(write=False)
        return out

    def b(self, k):
        """b_k = r_{floor(k/2)}^(-1/2), the leading coefficient of M_k."""
        return math.exp(-0.5 * self._log_r[k // 2])

    @cached_property
    def alpha(self):
        m = 2 * self.pairs
        out = np.array([[alpha_coeff(i, j, self.c1) for j in range(m)] for i in range(m)])
        out.setflags(write=False)
        return out

    def _check_time(self, t):
        tol = 1e-12 * self.horizon
        if not self.t1 - tol <= t <= self.horizon + tol:
            raise ValueError(f"time {t} outside [t1, T] = [{self.t1}, {self.horizon}]")
        return min(max(t, self.t1), self.horizon)

    def r_table(self, t, x, kmax=None):
        """R_0..R_kmax at time t, shape (kmax+1, *x.shape)."""
        t = self._check_time(t)
        kmax = self.n - 1 if kmax is None else kmax
        x = np.asarray(x, dtype=float)
        hs = hermite_table(kmax, x / self.c(t))
        zt = self.z(t)
        k = np.arange(kmax + 1).reshape((-1,) + (1,) * x.ndim)
        scale = (self.kappa * zt) ** k
        out = scale * hs
        odd = np.arange(3, kmax + 1, 2)
        out[odd] -= (2.0 * (odd - 1) * self.kappa**2).reshape((-1,) + (1,) * x.ndim) * (
            scale[odd - 2] * hs[odd - 2]
        )
        return out * heat_kernel(t, 0.0, x)

    def phi_table(self, t, x, kmax=None):
        """Phi_0..Phi_kmax at time t, shape (kmax+1, *x.shape)."""
        t = self._check_time(t)
        kmax = self.n - 1 if kmax is None else kmax
        x = np.asarray(x, dtype=float)
        T = self.horizon
        hs = hermite_table(max(kmax - 1, 0), x / self.c(t))
        zt = self.z(t)
        gauss = math.sqrt(2 * math.pi * T) * heat_kernel(2 * T - t, 0.0, x)
        out = np.empty((kmax + 1,) + x.shape)
        b_even = math.sqrt(2 * math.pi) * erf(x / math.sqrt(2 * (2 * T - t)))
        root = math.sqrt(2 * math.pi)
        for k in range(kmax + 1):
            if k % 2:
                e_prev = gauss * zt ** (-(k - 1)) * hs[k - 1]
                out[k] = -4.0 * self.kappa**k * e_prev / root
            else:
                if k >= 2:
                    e_prev = gauss * zt ** (-(k - 1)) * hs[k - 1]
                    b_even = -4.0 * e_prev + 2.0 * (k - 1) * b_even
                out[k] = self.kappa**k * b_even / root
        return out

    def sgn_transform(self, k, z):
        """G_k(z) = int sgn(z - w) R_k^(T)(w) dw."""
        return self.phi_table(self.horizon, z, k)[k]

    def m_polynomial(self, k):
        """M_k in the monomial basis (numpy Polynomial, increasing powers)."""
        return self.b(k) * self._monic(k)

    def _monic(self, k):
        z1, c1 = self.z1, self.c1
        herm_coef = np.zeros(k + 1)
        for j in range(k + 1):
            herm_coef[j] = alpha_coeff(k, j, c1) * z1 ** (j - k)
        mono = H.herm2poly(herm_coef)
        mono = mono * c1 ** -np.arange(mono.size, dtype=float)
        return Polynomial(mono)

    def r_moments(self, k, t, x):
        """R_k^(t) via Gaussian moments of the monomial coefficients (cross-check route).

        The Gaussian product rule gives p_t1(0,y) p_{t-t1}(y,x) = p_t(0,x) N(y; x t1/t, v)
        with v = t1 (t - t1) / t; E[q(Y)] is the heat operator exp(v/2 d^2) applied to q.
        """
        t = self._check_time(t)
        q = self._monic(k)
        x = np.asarray(x, dtype=float)
        v = self.t1 * (t - self.t1) / t
        heated = Polynomial([0.0])
        term = q
        for j in range(k // 2 + 1):
            heated = heated + term * ((0.5 * v) ** j / math.factorial(j))
            term = term.deriv(2)
        return heated(x * self.t1 / t) * heat_kernel(t, 0.0, x)

    def phi_quadrature(self, k, t, x, quad=None):
        """Phi_k^(t)(x) as the heat convolution of G_k, integrated adaptively."""
        t = self._check_time(t)
        s = self.horizon - t
        if s <= 0:
            return float(self.sgn_transform(k, x))
        quad = quad or QuadratureSpec()
        half = 10.0 * math.sqrt(s)
        return integrate_1d(
            lambda z: heat_kernel(s, x, z) * self.sgn_transform(k, z),
            x - half,
            x + half,
            atol=quad.atol,
        )


def m_polynomial(k, ctx: BasisContext):
    return ctx.m_polynomial(k)


def r_function(k, t, x, ctx: BasisContext):
    """R_k^(t)(x) = b_k^-1 int M_k(y) p_t1(0, y) p_{t - t1}(y, x) dy."""
    return ctx.r_table(t, x, k)[k][()]


def phi_function(k, t, x, ctx: BasisContext, quad=None, method="exact"):
    """Phi_k^(t)(x) = int dz p_{T-t}(x, z) int dw sgn(z - w) R_k^(T)(w).

    ``method="exact"`` uses the closed form; ``"quadrature"`` integrates the
    heat convolution of the sgn transform adaptively.
    """
    if method == "exact":
        return ctx.phi_table(t, x, k)[k][()]
    if method == "quadrature":
        return ctx.phi_quadrature(k, t, float(x), quad)
    raise ValueError(f"unknown method {method!r}")


def skew_gram(ctx: BasisContext, quad=None, size=None):
    """Matrix of sgn pairings b_i b_j int int sgn(y - x) R_i^(T)(x) R_j^(T)(y) dx dy.

    Reduced to one dimension through the sgn transform; should equal J_N.
    """
    quad = quad or QuadratureSpec()
    size = ctx.n if size is None else size
    T = ctx.horizon
    out = np.zeros((size, size))
    for i in range(size):
        for j in range(i + 1, size):
            scale = ctx.b(i) * ctx.b(j)

            def integrand(y, i=i, j=j, scale=scale):
                return scale * ctx.r_table(T, y, j)[j] * ctx.sgn_transform(i, y)

            out[i, j] = integrate_1d(integrand, -np.inf, np.inf, atol=quad.atol)
            out[j, i] = -out[i, j]
    return out
