"""Quadrature rules used by the oracles and the Fredholm discretization.

Two families live here: fixed piecewise Gauss-Legendre rules (vectorised,
used wherever the integrand is known to be smooth between breakpoints) and a
thin wrapper around adaptive Gauss-Kronrod (``scipy.integrate.quad``) that
raises instead of silently returning an unconverged value.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import QuadratureError

__all__ = [
    "QuadratureSpec",
    "gauss_legendre",
    "panel_rule",
    "uniform_breaks",
    "ordered_rule",
    "integrate_1d",
    "integration_matrix",
]


@dataclass(frozen=True)
class QuadratureSpec:
    """Settings for a quadrature rule.

    ``nodes`` is the Gauss-Legendre order per panel for fixed rules; ``atol``
    is the absolute tolerance requested from adaptive rules.  ``panel_width``
    is measured in units of the square root of the shortest time scale in the
    integrand and ``window`` (same units as positions, scaled by sqrt(T)) sets
    where Gaussian tails are cut.
    """

    scheme: str = "gauss-legendre"
    nodes: int = 16
    atol: float = 1e-10
    panel_width: float = 2.5
    window: float = 9.0

    def __post_init__(self):
        if self.scheme not in ("gauss-legendre", "gauss-kronrod"):
            raise ValueError(f"unknown quadrature scheme {self.scheme!r}")
        if self.nodes < 16:
            raise ValueError("node count must be at least 16")
        if not self.atol > 0:
            raise ValueError("tolerance must be positive")
        if not (self.panel_width > 0 and self.window > 0):
            raise ValueError("panel width and window must be positive")


@lru_cache(maxsize=64)
def _leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n, a=-1.0, b=1.0):
    """Nodes and weights of the n-point Gauss-Legendre rule on [a, b]."""
    x, w = _leggauss(int(n))
    half = 0.5 * (b - a)
    return half * x + 0.5 * (a + b), half * w


def integration_matrix(n, a=-1.0, b=1.0):
    """Matrix L with (L f)_i = int_a^{x_i} p(x) dx for the interpolant p of f at the n Gauss nodes.

    Exact for polynomials of degree < n.  Together with the Gauss weights it
    satisfies w_i L_ij + w_j L_ji = w_i w_j exactly (integration by parts
    under a rule exact to degree 2n - 1).
    """
    x, w = _leggauss(int(n))
    vander = np.polynomial.legendre.legvander(x, n)
    running = np.empty((n, n))
    running[:, 0] = x + 1.0
    for k in range(1, n):
        running[:, k] = (vander[:, k + 1] - vander[:, k - 1]) / (2 * k + 1)
    coef = (2 * np.arange(n) + 1) / 2.0
    return (running * coef) @ (vander[:, :n].T * w) * (0.5 * (b - a))


def panel_rule(breaks, n):
    """Composite Gauss-Legendre rule with one n-point panel between consecutive breaks."""
    breaks = np.unique(np.asarray(breaks, dtype=float))
    if breaks.size < 2:
        raise ValueError("need at least two distinct breakpoints")
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        x, w = gauss_legendre(n, a, b)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def uniform_breaks(lo, hi, width, extra=()):
    """Breakpoints covering [lo, hi] with panels no wider than ``width``.

    Points in ``extra`` that fall inside the interval are inserted so the
    integrand's kinks land on panel boundaries.
    """
    m = max(1, int(math.ceil((hi - lo) / width)))
    pts = np.linspace(lo, hi, m + 1)
    extra = [e for e in extra if lo < e < hi]
    return np.unique(np.concatenate([pts, np.asarray(extra, dtype=float)]))


def ordered_rule(k, breaks, n):
    """Rule for the ordered region ``b_0 < y_1 < ... < y_k < b_m``.

    Each variable is assigned a panel (non-decreasing in the variable index).
    Variables sharing a panel fill an ordered simplex, which is mapped to a
    cube by collapsed coordinates; the Jacobian is smooth, so the rule keeps
    spectral accuracy for integrands smooth on each closed cell.

    Returns nodes of shape (P, k) and weights of shape (P,).
    """
    breaks = np.unique(np.asarray(breaks, dtype=float))
    m = breaks.size - 1
    if k == 0:
        return np.zeros((1, 0)), np.ones(1)
    u, wu = gauss_legendre(n, 0.0, 1.0)
    all_nodes, all_weights = [], []
    for assign in itertools.combinations_with_replacement(range(m), k):
        groups = [(p, sum(1 for a in assign if a == p)) for p in sorted(set(assign))]
        parts, pweights = [], []
        for p, j in groups:
            y, w = _simplex_in_panel(j, breaks[p], breaks[p + 1], u, wu)
            parts.append(y)
            pweights.append(w)
        nodes, weights = parts[0], pweights[0]
        for y, w in zip(parts[1:], pweights[1:]):
            nodes = np.concatenate(
                [np.repeat(nodes, len(w), axis=0), np.tile(y, (len(weights), 1))], axis=1
            )
            weights = np.outer(weights, w).ravel()
        all_nodes.append(nodes)
        all_weights.append(weights)
    return np.concatenate(all_nodes), np.concatenate(all_weights)


def _simplex_in_panel(j, a, b, u, wu):
    # a < y_1 < ... < y_j < b via y_j = a + (b-a) u_j, y_i = a + (y_{i+1}-a) u_i
    grids = np.meshgrid(*([u] * j), indexing="ij")
    wgrids = np.meshgrid(*([wu] * j), indexing="ij")
    us = [g.ravel() for g in grids]
    w = np.prod([g.ravel() for g in wgrids], axis=0)
    y = np.empty((us[0].size, j))
    y[:, j - 1] = a + (b - a) * us[j - 1]
    w = w * (b - a)
    for i in range(j - 2, -1, -1):
        span = y[:, i + 1] - a
        y[:, i] = a + span * us[i]
        w = w * span
    return y, w


def integrate_1d(f, a, b, atol=1e-10, points=None, limit=400):
    """Adaptive Gauss-Kronrod integral of a scalar function.

    Infinite limits are allowed; ``points`` are split points (kinks).  Raises
    :class:`QuadratureError` carrying the achieved error estimate if the
    requested absolute tolerance is not met.
    """
    cuts = sorted(p for p in (points or ()) if a < p < b)
    edges = [a, *cuts, b]
    total = 0.0
    err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, e = integrate.quad(f, lo, hi, epsabs=atol / len(edges), epsrel=0.0, limit=limit)
        total += val
        err += e
    if not np.isfinite(total) or err > atol:
        raise QuadratureError(
            f"adaptive quadrature reached {err:.3g}, requested {atol:.3g}", achieved=err
        )
    return total
