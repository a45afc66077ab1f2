import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from nclab.kernels import (
    CorrelationKernel,
    CorrelationQuery,
    assemble_a,
    correlation,
    kernel_d,
    kernel_i_tilde,
    kernel_s,
    kernel_s_tilde,
)
from nclab.stochastic import TimePartition, correlation_bruteforce, heat_kernel, multitime_density

PART = TimePartition((0.3, 0.6, 1.0))


@pytest.fixture(scope="module")
def k2():
    return CorrelationKernel(2, PART)


@pytest.fixture(scope="module")
def k4():
    return CorrelationKernel(4, PART)


def test_kernel_validation():
    with pytest.raises(ValueError):
        CorrelationKernel(3, PART)
    with pytest.raises(ValueError):
        CorrelationKernel(4, PART, truncation=1)
    with pytest.raises(ValueError):
        CorrelationKernel(2, PART, truncation=3).s_tilde_series(0.3, 0.0, 0.6, 0.0)


def test_query_validation():
    with pytest.raises(ValueError):
        CorrelationQuery(PART, ([0.0],))
    with pytest.raises(ValueError):
        CorrelationQuery(PART, ([np.nan], [], []))
    q = CorrelationQuery.single(PART, 1, 0.5)
    assert q.sizes == (0, 1, 0)
    times, xs = q.flat()
    np.testing.assert_array_equal(times, [0.6])
    np.testing.assert_array_equal(xs, [0.5])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2), st.integers(0, 2), st.floats(-3, 3), st.floats(-3, 3))
def test_antisymmetries(mu, nu, x, y):
    for kernel in (CorrelationKernel(2, PART), CorrelationKernel(4, PART)):
        s, t = PART[mu], PART[nu]
        assert kernel.d(s, x, t, y) == pytest.approx(-kernel.d(t, y, s, x), abs=1e-13)
        assert kernel.i(s, x, t, y) == pytest.approx(-kernel.i(t, y, s, x), abs=1e-13)
        assert kernel.i_tilde(s, x, t, y) == pytest.approx(-kernel.i_tilde(t, y, s, x), abs=1e-13)
        assert kernel.w(s, x, t, y) == pytest.approx(-kernel.w(t, y, s, x), abs=1e-15)


def test_s_tilde_differs_from_s_only_forward_in_time(k4):
    x, y = 0.3, -0.4
    assert kernel_s_tilde(k4, 2, x, 0, y) == kernel_s(k4, 2, x, 0, y)
    assert kernel_s_tilde(k4, 1, x, 1, y) == kernel_s(k4, 1, x, 1, y)
    diff = kernel_s(k4, 0, x, 2, y) - kernel_s_tilde(k4, 0, x, 2, y)
    assert diff == pytest.approx(heat_kernel(0.7, x, y), rel=1e-14)


def test_partition_index_checks(k2):
    with pytest.raises(IndexError):
        kernel_d(k2, 3, 0.0, 0, 0.0)
    assert kernel_i_tilde(k2, 0, 0.1, 1, 0.2) == k2.i_tilde(0.3, 0.1, 0.6, 0.2)


def test_kernels_broadcast(k4):
    x = np.linspace(-1, 1, 5)
    grid = k4.s_tilde(0.3, x[:, None], 1.0, x[None, :])
    assert grid.shape == (5, 5)
    assert grid[1, 3] == pytest.approx(k4.s_tilde(0.3, x[1], 1.0, x[3]), rel=1e-14)


@pytest.mark.parametrize("s,t", [(0.3, 0.6), (0.6, 0.6), (0.3, 1.0)])
def test_sgn_pairing_against_quadrature(k2, s, t):
    # the w-integral of sgn(w - z) against a Gaussian is done by hand, the z-integral numerically
    x, y = 0.2, -0.5
    horizon = PART.horizon
    spread = math.sqrt(2 * (horizon - t))

    def inner(z):
        return np.sign(y - z) if spread == 0 else math.erf((y - z) / spread)

    ref = integrate.quad(lambda z: heat_kernel(horizon - s, x, z) * inner(z), x - 12, x + 12, points=[y], epsabs=1e-12)[0]
    assert k2.w(s, x, t, y) == pytest.approx(ref, abs=1e-10)
    assert k2.w(1.0, x, 1.0, y) == np.sign(y - x)


@pytest.mark.parametrize(
    "part,pts",
    [
        (TimePartition((1.0,)), [[0.4]]),
        (TimePartition((1.0,)), [[-0.7, 0.9]]),
        (TimePartition((0.5, 1.0)), [[0.3], []]),
        (TimePartition((0.5, 1.0)), [[], [-1.1]]),
        (TimePartition((0.5, 1.0)), [[0.3], [-0.2]]),
        (TimePartition((0.5, 1.0)), [[-0.6, 0.3], [0.8]]),
    ],
)
def test_pfaffian_matches_integral_two_particles(part, pts):
    kernel = CorrelationKernel(2, part)
    value = correlation(kernel, CorrelationQuery(part, tuple(pts)))
    assert value == pytest.approx(correlation_bruteforce(part, pts, 2), abs=1e-9)


def test_pfaffian_matches_integral_four_particles():
    part = TimePartition((0.8,))
    kernel = CorrelationKernel(4, part)
    for pts in ([[0.25]], [[-0.5, 0.6]]):
        value = correlation(kernel, CorrelationQuery(part, tuple(pts)))
        assert value == pytest.approx(correlation_bruteforce(part, pts, 4), abs=1e-8)


def test_full_query_is_joint_density():
    part = TimePartition((0.4, 1.0))
    kernel = CorrelationKernel(2, part)
    x, y = [-0.3, 0.5], [0.9, 0.1]
    value = correlation(kernel, CorrelationQuery(part, (x, y)))
    assert value == pytest.approx(multitime_density(part, [np.array(x), np.array(y)]), rel=1e-9)


def test_assembly_shape_and_skewness():
    part = TimePartition((0.5, 1.0))
    kernel = CorrelationKernel(2, part)
    a = assemble_a(kernel, CorrelationQuery(part, ([0.1, -0.4], [0.7])))
    assert a.shape == (6, 6)
    np.testing.assert_array_equal(a, -a.T)
    with pytest.raises(ValueError):
        assemble_a(kernel, CorrelationQuery(part, ([0.1, 0.2, 0.3], [])))
    with pytest.raises(ValueError):
        assemble_a(kernel, CorrelationQuery(TimePartition((1.0,)), ([0.1],)))


def test_coincident_points_give_zero(k4):
    assert correlation(k4, CorrelationQuery(PART, ([0.3, 0.3], [], []))) == 0.0


def test_order_within_slice_is_irrelevant(k4):
    a = correlation(k4, CorrelationQuery(PART, ([-0.2, 0.5], [0.1], [0.4, -0.9])))
    b = correlation(k4, CorrelationQuery(PART, ([0.5, -0.2], [0.1], [-0.9, 0.4])))
    assert a == pytest.approx(b, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2.5, 2.5), min_size=3, max_size=3))
def test_correlations_are_nonnegative(xs):
    kernel = CorrelationKernel(4, PART)
    assert correlation(kernel, CorrelationQuery(PART, ([xs[0]], [xs[1]], [xs[2]]))) >= 0.0


@pytest.mark.parametrize("n", [2, 4, 6])
def test_density_integrates_to_n(n):
    kernel = CorrelationKernel(n, PART)
    for t in PART:
        total = integrate.quad(lambda x: kernel.density(t, x), -np.inf, np.inf, epsabs=1e-10)[0]
        assert total == pytest.approx(n, abs=1e-6)


def test_density_closed_form_at_horizon():
    kernel = CorrelationKernel(2, TimePartition((1.0,)))
    for x in (-1.2, 0.0, 2.0):
        p = heat_kernel(1.0, 0, x)
        expect = math.sqrt(math.pi) * p * (x * math.erf(x / math.sqrt(2)) + 2 * p)
        assert kernel.density(1.0, x) == pytest.approx(expect, rel=1e-12)


@pytest.mark.parametrize("n", [2, 4])
def test_tail_series_within_bound(n):
    kernel = CorrelationKernel(n, PART)
    rng = np.random.default_rng(11)
    for _ in range(10):
        x, y = rng.uniform(-2, 2, size=2)
        for s, t in [(0.3, 0.6), (0.3, 1.0), (0.6, 1.0)]:
            ser = kernel.s_tilde_series(s, x, t, y)
            assert abs(kernel.s_tilde(s, x, t, y) - ser.value) <= ser.tail_bound
        for s, t in [(0.3, 0.3), (0.6, 1.0), (0.3, 1.0)]:
            ser = kernel.i_tilde_series(s, x, t, y)
            assert abs(kernel.i_tilde(s, x, t, y) - ser.value) <= ser.tail_bound


def test_tail_series_backward_in_time_is_exact(k2):
    ser = k2.s_tilde_series(1.0, 0.4, 0.3, -0.2)
    assert ser.value == k2.s(1.0, 0.4, 0.3, -0.2)
    assert ser.tail_bound == 0.0
