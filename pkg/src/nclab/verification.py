"""Numerical identity checks shared by ``nclab verify`` and the acceptance tests.

Each check returns a :class:`CheckResult` with the worst measured error, the
tolerance it is held to and whether it passed.  ``quick=True`` shrinks the
sample sizes for interactive use; the tolerances never change.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .basis import BasisContext, skew_gram
from .fredholm import (
    BumpFunction,
    TestFunctionSpec,
    characteristic_direct,
    characteristic_pf,
    discretize,
    fredholm_det,
    fredholm_pf,
)
from .kernels import CorrelationKernel, CorrelationQuery, correlation
from .montecarlo import SimulationConfig, estimate_onepoint, estimate_twotime, simulate
from .quadrature import ordered_rule, uniform_breaks
from .skewlin import debruijn_matrix, pfaffian, pfaffian_definition, symplectic_j
from .stochastic import TimePartition, correlation_bruteforce, heat_kernel, survival_probability

__all__ = [
    "CheckResult",
    "check_pfaffian",
    "check_skew_gram",
    "check_debruijn",
    "check_survival",
    "check_correlation",
    "check_series",
    "check_normalization",
    "check_rains",
    "check_characteristic",
    "check_montecarlo",
    "run_all",
]


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    tolerance: float
    seconds: float = 0.0
    detail: str = ""

    @property
    def passed(self):
        return bool(np.isfinite(self.measured) and self.measured <= self.tolerance)

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{flag} {self.name}: measured {self.measured:.3e}, tolerance {self.tolerance:.1e}{extra}"


class _Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def random_skew(rng, n, dtype=float):
    """Skew matrix with upper-triangle entries uniform in [-1, 1] (real and imaginary parts)."""
    a = rng.uniform(-1.0, 1.0, (n, n))
    if dtype is complex:
        a = a + 1j * rng.uniform(-1.0, 1.0, (n, n))
    a = np.triu(a, 1)
    return a - a.T


def check_pfaffian(seed=0, per_dim=200, dims=range(2, 21, 2)):
    """Pf(A)^2 = det(A) for random skew matrices; elimination vs the matching sum for n <= 8."""
    rng = np.random.default_rng(seed)
    with _Timer() as clock:
        worst_sq = 0.0
        worst_def = 0.0
        for n in dims:
            mats = np.stack([random_skew(rng, n) for _ in range(per_dim)])
            pf = pfaffian(mats)
            det = np.linalg.det(mats)
            worst_sq = max(worst_sq, float(np.max(np.abs(pf**2 - det) / np.abs(det))))
            if n <= 8:
                for a, p in zip(mats[:20], pf[:20]):
                    ref = pfaffian_definition(a)
                    worst_def = max(worst_def, abs(p - ref) / max(1.0, abs(ref)))
    return [
        CheckResult("pfaffian squared equals determinant", worst_sq, 1e-10, clock.seconds),
        CheckResult("pfaffian elimination equals matching sum", worst_def, 1e-12, clock.seconds),
    ]


def check_skew_gram(ns=(2, 4, 6, 8), fractions=(0.25, 0.5, 0.9), horizon=1.0):
    with _Timer() as clock:
        worst = 0.0
        for n in ns:
            for f in fractions:
                ctx = BasisContext(n, horizon, f * horizon, spare=0)
                worst = max(worst, float(np.max(np.abs(skew_gram(ctx) - symplectic_j(n)))))
    return CheckResult("skew Gram matrix equals J_N", worst, 1e-8, clock.seconds)


DEBRUIJN_FAMILIES = (
    ((-0.5, 0.7), (0.4, 1.2)),
    ((0.0, 1.0), (0.3, 1.0)),
    ((1.0, 0.5), (-1.0, 2.0)),
    ((0.2, 0.3), (0.25, 0.35)),
)


def _gauss(mean, sd):
    return lambda x: heat_kernel(sd * sd, mean, x)


def check_debruijn(families=DEBRUIJN_FAMILIES):
    """Ordered-region integral of det[phi_i(y_j)] vs Pf of the de Bruijn matrix (N = 2)."""
    with _Timer() as clock:
        worst = 0.0
        for (m1, s1), (m2, s2) in families:
            phis = [_gauss(m1, s1), _gauss(m2, s2)]
            lo = min(m1 - 12 * s1, m2 - 12 * s2)
            hi = max(m1 + 12 * s1, m2 + 12 * s2)
            breaks = uniform_breaks(lo, hi, 0.5 * min(s1, s2))
            y, w = ordered_rule(2, breaks, 20)
            direct = np.dot(w, phis[0](y[:, 0]) * phis[1](y[:, 1]) - phis[0](y[:, 1]) * phis[1](y[:, 0]))
            via_pf = pfaffian(debruijn_matrix(phis))
            worst = max(worst, abs(direct - via_pf))
    return CheckResult("de Bruijn identity", worst, 1e-7, clock.seconds)


def check_survival(times=(0.1, 0.5, 1.0, 2.0, 4.0), gaps=(0.05, 0.3, 1.0, 2.0, 4.0)):
    """Closed-form N = 2 survival probability vs adaptive quadrature of the ordered integral."""
    with _Timer() as clock:
        worst = 0.0
        for t in times:
            for gap in gaps:

                def det(y2, y1, t=t, gap=gap):
                    return heat_kernel(t, 0, y1) * heat_kernel(t, gap, y2) - heat_kernel(
                        t, 0, y2
                    ) * heat_kernel(t, gap, y1)

                half = 12 * math.sqrt(t)
                lo, hi = -half, gap + half
                val = integrate.dblquad(det, lo, hi, lambda y1: y1, hi, epsabs=1e-11, epsrel=1e-11)[0]
                worst = max(worst, abs(val - survival_probability(t, [0.0, gap])))
    return CheckResult("survival probability closed form", worst, 1e-8, clock.seconds)


def correlation_cases(points=15, seed=1):
    """(label, partition, query points) for the three pfaffian-vs-integral cases."""
    rng = np.random.default_rng(seed)
    part = TimePartition((0.4, 1.0))
    single = TimePartition((1.0,))
    cases = []
    for j in range(points):
        x, y = rng.uniform(-1.5, 1.5, size=2)
        if j % 2 == 0:
            cases.append(("one point at T", single, [[x]]))
        else:
            cases.append(("one point at T", part, [[], [x]]))
        cases.append(("one point before T", part, [[x], []]))
        cases.append(("two points at two times", part, [[x], [y]]))
    return cases


def check_correlation(points=15, n=2, seed=1):
    with _Timer() as clock:
        worst = {}
        for label, part, pts in correlation_cases(points, seed):
            kernel = CorrelationKernel(n, part)
            pf = correlation(kernel, CorrelationQuery(part, tuple(pts)))
            ref = correlation_bruteforce(part, pts, n)
            worst[label] = max(worst.get(label, 0.0), abs(pf - ref))
    return [
        CheckResult(f"pfaffian correlation vs integral ({label})", err, 1e-5, clock.seconds)
        for label, err in worst.items()
    ]


def check_series(samples=50, seed=2):
    """Closed-form S-tilde and I-tilde vs the truncated tail series (K = N/2 + 20)."""
    rng = np.random.default_rng(seed)
    part = TimePartition((0.3, 0.6, 1.0))
    m = len(part)
    with _Timer() as clock:
        excess_s = excess_i = 0.0
        for _ in range(samples):
            n = int(rng.choice([2, 4]))
            kernel = CorrelationKernel(n, part)
            x, y = rng.uniform(-2.0, 2.0, size=2)
            mu, nu = sorted(rng.choice(m, size=2, replace=False))
            s, t = part[mu], part[nu]
            ser = kernel.s_tilde_series(s, x, t, y)
            excess_s = max(excess_s, abs(kernel.s_tilde(s, x, t, y) - ser.value) / ser.tail_bound)
            # I-tilde: any pair of slices except both at T, where the series diverges
            while True:
                mu, nu = rng.integers(0, m, size=2)
                if not (mu == nu == m - 1):
                    break
            s, t = part[mu], part[nu]
            ser = kernel.i_tilde_series(s, x, t, y)
            excess_i = max(excess_i, abs(kernel.i_tilde(s, x, t, y) - ser.value) / ser.tail_bound)
    return [
        CheckResult("S-tilde closed form vs tail series (error / tail bound)", excess_s, 1.0, clock.seconds),
        CheckResult("I-tilde closed form vs tail series (error / tail bound)", excess_i, 1.0, clock.seconds),
    ]


def check_normalization(ns=(2, 4), times=(0.25, 0.6, 1.0)):
    part = TimePartition(times)
    with _Timer() as clock:
        worst = 0.0
        for n in ns:
            kernel = CorrelationKernel(n, part)
            for t in part:
                total = integrate.quad(lambda x: kernel.density(t, x), -np.inf, np.inf, epsabs=1e-10)[0]
                worst = max(worst, abs(total - n))
    return CheckResult("one-point density integrates to N", worst, 1e-5, clock.seconds)


def characteristic_cases():
    """Five (partition, test functions, theta) choices at N = 2 with M in {0, 1}."""
    one = TimePartition((1.0,))
    two = TimePartition((0.5, 1.0))
    return [
        (one, TestFunctionSpec((BumpFunction(0.2, 1.0),), (0.7,))),
        (TimePartition((0.5,)), TestFunctionSpec((BumpFunction(-0.3, 1.5),), (1.3,))),
        (one, TestFunctionSpec((BumpFunction(0.0, 2.5, 0.5),), (-2.0,))),
        (two, TestFunctionSpec((BumpFunction(0.0, 1.0), BumpFunction(0.5, 1.2)), (0.8, -0.6))),
        (two, TestFunctionSpec((None, BumpFunction(0.0, 2.0)), (0.0, 2.0))),
    ]


def check_rains(sizes=(20, 40, 80), seed=3):
    """Pf(J + K)^2 = det(I + J^-1 K) on characteristic discretizations and random complex K."""
    from .fredholm import DiscretizedKernel

    rng = np.random.default_rng(seed)
    with _Timer() as clock:
        worst = 0.0
        for part, spec in characteristic_cases():
            kernel = CorrelationKernel(2, part)
            for size in sizes:
                disc = discretize(spec, kernel, size)
                pf = fredholm_pf(disc)
                worst = max(worst, abs(pf**2 - fredholm_det(disc)) / abs(pf**2))
        for size in sizes:
            k = random_skew(rng, 2 * size, complex) / (2 * size)
            disc = DiscretizedKernel(k)
            pf = fredholm_pf(disc)
            worst = max(worst, abs(pf**2 - fredholm_det(disc)) / abs(pf**2))
    return CheckResult("Fredholm pfaffian squared equals determinant", worst, 1e-8, clock.seconds)


def check_characteristic(cases=None):
    with _Timer() as clock:
        worst = 0.0
        for part, spec in cases or characteristic_cases():
            kernel = CorrelationKernel(2, part)
            worst = max(worst, abs(characteristic_direct(spec, part) - characteristic_pf(spec, kernel)))
    return CheckResult("characteristic function direct vs Fredholm pfaffian", worst, 1e-5, clock.seconds)


def check_montecarlo(paths=100_000, seed=20261016, threads=None, times=(0.5, 1.0)):
    """Sampler vs kernel predictions: worst |z| over one-point bins and two-time boxes."""
    with _Timer() as clock:
        config = SimulationConfig(n=2, horizon=1.0, paths=paths, seed=seed)
        sample = simulate(config, times, threads=threads)
        edges = np.linspace(-2.5, 2.5, 21)
        worst_one = 0.0
        for t in times:
            part = TimePartition((t, 1.0)) if t < 1.0 else TimePartition((1.0,))
            kernel = CorrelationKernel(2, part)
            est = estimate_onepoint(sample, t, edges)
            exact = np.array(
                [
                    integrate.quad(lambda x: kernel.density(t, x), a, b, epsabs=1e-12)[0] / (b - a)
                    for a, b in zip(edges[:-1], edges[1:])
                ]
            )
            worst_one = max(worst_one, float(np.max(np.abs(est.values - exact) / est.stderr)))
        t_a, t_b = times[0], times[-1]
        boxes = [((-1.0, 0.0), (-1.0, 0.0)), ((-1.0, 0.0), (0.0, 1.0)), ((0.0, 0.5), (-0.5, 0.5)),
                 ((0.5, 1.5), (0.5, 1.5)), ((-2.0, -0.5), (0.5, 2.0))]
        est = estimate_twotime(sample, t_a, t_b, boxes)
        part = TimePartition((t_a, t_b))
        kernel = CorrelationKernel(2, part)
        worst_two = 0.0
        for ((a0, a1), (b0, b1)), val, err in zip(boxes, est.values, est.stderr):
            pred = _box_integral(kernel, part, (a0, a1), (b0, b1))
            worst_two = max(worst_two, abs(val - pred) / err)
    detail = f"{paths} paths"
    return [
        CheckResult("Monte Carlo one-point density (max |z|)", worst_one, 3.0, clock.seconds, detail),
        CheckResult("Monte Carlo two-time box intensity (max |z|)", worst_two, 3.0, clock.seconds, detail),
    ]


def _box_integral(kernel, part, box_a, box_b, nodes=24):
    from .quadrature import gauss_legendre

    xa, wa = gauss_legendre(nodes, *box_a)
    xb, wb = gauss_legendre(nodes, *box_b)
    total = 0.0
    for x, w1 in zip(xa, wa):
        for y, w2 in zip(xb, wb):
            total += w1 * w2 * correlation(kernel, CorrelationQuery(part, ((x,), (y,))))
    return total


def run_all(quick=False, mc_paths=None, seed=20261016, threads=None):
    """Every check; ``quick`` reduces sample counts (tolerances unchanged)."""
    results = []
    results += check_pfaffian(per_dim=20 if quick else 200)
    results.append(check_skew_gram(ns=(2, 4) if quick else (2, 4, 6, 8)))
    results.append(check_debruijn())
    results.append(check_survival(times=(0.5, 1.0), gaps=(0.3, 1.0)) if quick else check_survival())
    results += check_correlation(points=3 if quick else 15)
    results += check_series(samples=10 if quick else 50)
    results.append(check_normalization())
    results.append(check_rains())
    results.append(check_characteristic(characteristic_cases()[:3] if quick else None))
    paths = mc_paths if mc_paths is not None else (20_000 if quick else 100_000)
    if paths:
        results += check_montecarlo(paths=paths, seed=seed, threads=threads)
    return results
