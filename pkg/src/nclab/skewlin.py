"""Skew-symmetric linear algebra: pfaffians, J_N, de Bruijn and Andreief matrices."""

from __future__ import annotations

import numpy as np

from .errors import SkewSymmetryError
from .quadrature import QuadratureSpec, integrate_1d

__all__ = [
    "skew_matrix",
    "pfaffian",
    "pfaffian_definition",
    "symplectic_j",
    "debruijn_matrix",
    "andreief_matrix",
]

SKEW_TOL = 1e-12
PIVOT_TOL = 1e-14


def skew_matrix(a, tol=SKEW_TOL):
    """Return ``a`` as an exactly skew-symmetric array.

    Accepts a stack of matrices (``(..., n, n)``).  Deviations up to ``tol``
    (relative to max(1, max|a|)) are averaged away; larger ones raise.
    """
    a = np.asarray(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    if not np.issubdtype(a.dtype, np.inexact):
        a = a.astype(float)
    if a.size == 0:
        return a.copy()
    at = np.swapaxes(a, -1, -2)
    dev = np.max(np.abs(a + at))
    scale = max(1.0, float(np.max(np.abs(a))))
    if dev > tol * scale:
        raise SkewSymmetryError(f"matrix is not skew-symmetric (|A + A^T| = {dev:.3g})")
    return 0.5 * (a - at)


def pfaffian(a, check=True):
    """Pfaffian of an even-dimensional skew-symmetric matrix.

    Skew Gaussian elimination with partial pivoting (each swap flips the
    sign); O(n^3).  Works for real or complex input and for stacks of
    matrices with shape ``(..., n, n)``, returning an array of pfaffians.
    Pivots below 1e-14 * max|entry| make the pfaffian exactly zero.
    """
    a = skew_matrix(a) if check else np.array(a)
    n = a.shape[-1]
    if n % 2:
        raise ValueError(f"pfaffian needs an even dimension, got {n}")
    batch_shape = a.shape[:-2]
    if n == 0:
        return np.ones(batch_shape, dtype=np.result_type(a.dtype, float))[()]
    a = np.array(a.reshape((-1, n, n)), dtype=np.result_type(a.dtype, float))
    nb = a.shape[0]
    pf = np.ones(nb, dtype=a.dtype)
    scale = np.max(np.abs(a).reshape(nb, -1), axis=1)
    dead = scale == 0
    rows = np.arange(nb)
    for k in range(0, n - 1, 2):
        kp = k + 1 + np.argmax(np.abs(a[:, k + 1 :, k]), axis=1)
        swap = kp != k + 1
        if swap.any():
            r, p = rows[swap], kp[swap]
            tmp = a[r, k + 1, :].copy()
            a[r, k + 1, :] = a[r, p, :]
            a[r, p, :] = tmp
            tmp = a[r, :, k + 1].copy()
            a[r, :, k + 1] = a[r, :, p]
            a[r, :, p] = tmp
            pf[swap] = -pf[swap]
        piv = a[:, k, k + 1].copy()
        small = np.abs(piv) <= PIVOT_TOL * scale
        dead |= small
        piv[dead] = 1.0
        pf *= piv
        if k + 2 < n:
            tau = a[:, k, k + 2 :] / piv[:, None]
            col = a[:, k + 2 :, k + 1]
            a[:, k + 2 :, k + 2 :] += tau[:, :, None] * col[:, None, :] - col[:, :, None] * tau[:, None, :]
    pf[dead] = 0.0
    return pf.reshape(batch_shape)[()]


def _matchings(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for idx, partner in enumerate(rest):
        for m in _matchings(rest[:idx] + rest[idx + 1 :]):
            yield [(first, partner), *m]


def _perm_sign(perm):
    sign = 1
    perm = list(perm)
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def pfaffian_definition(a):
    """Pfaffian from the signed pair-partition sum (oracle, dimension <= 8).

    The 1/n! average over restricted permutations collapses to one term per
    perfect matching with the sign of the permutation (i1 j1 i2 j2 ...).
    """
    a = skew_matrix(a)
    n = a.shape[0]
    if n % 2:
        raise ValueError(f"pfaffian needs an even dimension, got {n}")
    if n > 8:
        raise ValueError("direct pfaffian evaluation is limited to dimension 8")
    total = 0.0
    for m in _matchings(list(range(n))):
        perm = [i for pair in m for i in pair]
        term = _perm_sign(perm)
        for i, j in m:
            term = term * a[i, j]
        total = total + term
    return total


def symplectic_j(n):
    """J_N = I_{N/2} (x) [[0, 1], [-1, 0]]."""
    if n % 2 or n < 0:
        raise ValueError(f"J_N needs an even non-negative size, got {n}")
    return np.kron(np.eye(n // 2), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def debruijn_matrix(phis, quad=None, lower=-np.inf, upper=np.inf):
    """Skew matrix of pairwise sgn-integrals ``int int sgn(v - u) phi_i(u) phi_j(v)``.

    Each entry is reduced to a single integral, ``int phi_j(v) (2 F_i(v) - F_i(inf)) dv``,
    with ``F_i`` the running integral of ``phi_i``; both layers are adaptive.
    The pfaffian of the result equals the ordered-region integral of
    ``det[phi_i(y_j)]`` for an even number of functions.
    """
    quad = quad or QuadratureSpec()
    n = len(phis)
    if n % 2:
        raise ValueError("de Bruijn reduction needs an even number of functions")
    atol = quad.atol
    totals = [integrate_1d(f, lower, upper, atol=atol) for f in phis]
    out = np.zeros((n, n))
    for i in range(n):
        fi = phis[i]

        def running(v, fi=fi):
            return integrate_1d(fi, lower, v, atol=atol) if v > lower else 0.0

        for j in range(i + 1, n):
            fj = phis[j]
            out[i, j] = integrate_1d(
                lambda v: fj(v) * (2.0 * running(v) - totals[i]), lower, upper, atol=10 * atol
            )
            out[j, i] = -out[i, j]
    return out


def andreief_matrix(phis, phibars, quad=None, lower=-np.inf, upper=np.inf):
    """Gram matrix ``int phi_i(x) phibar_j(x) dx`` of two equal-length function lists."""
    if len(phis) != len(phibars):
        raise ValueError("function lists must have equal length")
    quad = quad or QuadratureSpec()
    n = len(phis)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = integrate_1d(
                lambda x, i=i, j=j: phis[i](x) * phibars[j](x), lower, upper, atol=quad.atol
            )
    return out

