import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nclab.errors import SkewSymmetryError
from nclab.skewlin import (
    andreief_matrix,
    debruijn_matrix,
    pfaffian,
    pfaffian_definition,
    skew_matrix,
    symplectic_j,
)
from nclab.stochastic import heat_kernel, survival_probability
from nclab.verification import random_skew


def test_two_by_two():
    assert pfaffian(np.array([[0.0, 2.5], [-2.5, 0.0]])) == 2.5


@pytest.mark.parametrize("n", [2, 4, 6])
def test_pf_of_j_is_one(n):
    assert pfaffian(symplectic_j(n)) == pytest.approx(1.0, abs=0)


def test_empty_matrix_has_pfaffian_one():
    assert pfaffian(np.zeros((0, 0))) == 1.0


def test_odd_dimension_rejected():
    with pytest.raises(ValueError):
        pfaffian(np.zeros((3, 3)))


def test_asymmetry_rejected():
    a = random_skew(np.random.default_rng(0), 4)
    a[0, 1] += 1e-6
    with pytest.raises(SkewSymmetryError):
        pfaffian(a)


def test_rounding_level_asymmetry_is_averaged():
    a = random_skew(np.random.default_rng(1), 4)
    b = a.copy()
    b[0, 1] += 1e-14
    assert pfaffian(b) == pytest.approx(pfaffian(a), rel=1e-12)
    s = skew_matrix(b)
    np.testing.assert_array_equal(s, -s.T)


def test_random_six_by_six_squared_is_det():
    rng = np.random.default_rng(6)
    for _ in range(20):
        a = random_skew(rng, 6)
        assert pfaffian(a) ** 2 == pytest.approx(np.linalg.det(a), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_elimination_matches_matching_sum(half, seed):
    a = random_skew(np.random.default_rng(seed), 2 * half)
    ref = pfaffian_definition(a)
    assert abs(pfaffian(a) - ref) <= 1e-12 * max(1.0, abs(ref))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_congruence_rule(half, seed):
    rng = np.random.default_rng(seed)
    a = random_skew(rng, 2 * half)
    b = rng.uniform(-1, 1, (2 * half, 2 * half))
    assert pfaffian(b @ a @ b.T) == pytest.approx(np.linalg.det(b) * pfaffian(a), rel=1e-9, abs=1e-12)


def test_repeated_row_and_column_gives_zero():
    rng = np.random.default_rng(3)
    a = random_skew(rng, 6)
    # copy index 1 onto index 4 (rows and columns), keeping skew symmetry
    a[4, :] = a[1, :]
    a[:, 4] = a[:, 1]
    a[4, 4] = 0.0
    a[1, 4] = a[4, 1] = 0.0
    assert pfaffian(a) == 0.0


def test_batched_and_complex_input():
    rng = np.random.default_rng(4)
    stack = np.stack([random_skew(rng, 8) for _ in range(5)])
    np.testing.assert_allclose(pfaffian(stack), [pfaffian(m) for m in stack], rtol=1e-13)
    c = random_skew(rng, 8, complex)
    assert pfaffian(c) ** 2 == pytest.approx(np.linalg.det(c), rel=1e-10)


def test_symplectic_j():
    np.testing.assert_array_equal(symplectic_j(2), [[0, 1], [-1, 0]])
    j4 = symplectic_j(4)
    np.testing.assert_array_equal(j4[:2, 2:], 0)
    np.testing.assert_array_equal(j4[2:, 2:], [[0, 1], [-1, 0]])
    for n in (2, 4, 6):
        np.testing.assert_array_equal(symplectic_j(n) @ symplectic_j(n), -np.eye(n))
    with pytest.raises(ValueError):
        symplectic_j(3)


def test_debruijn_survival_consistency():
    t, x = 0.7, (-0.3, 0.5)
    phis = [lambda y, a=a: heat_kernel(t, a, y) for a in x]
    assert pfaffian(debruijn_matrix(phis)) == pytest.approx(survival_probability(t, x), abs=1e-8)


def test_debruijn_identical_functions():
    phi = lambda y: heat_kernel(1.0, 0.2, y)  # noqa: E731
    assert pfaffian(debruijn_matrix([phi, phi])) == pytest.approx(0.0, abs=1e-10)


def test_andreief_orthonormal_pair_is_identity():
    phis = [lambda x: np.pi**-0.25 * np.exp(-x * x / 2), lambda x: np.pi**-0.25 * np.sqrt(2) * x * np.exp(-x * x / 2)]
    np.testing.assert_allclose(andreief_matrix(phis, phis), np.eye(2), atol=1e-10)


def test_andreief_identity_for_gaussians():
    from nclab.quadrature import ordered_rule, uniform_breaks

    phis = [lambda x: heat_kernel(0.5, -0.4, x), lambda x: heat_kernel(0.8, 0.6, x)]
    bars = [lambda x: heat_kernel(0.6, 0.1, x), lambda x: heat_kernel(0.4, 0.9, x)]
    y, w = ordered_rule(2, uniform_breaks(-8, 8, 0.5), 20)

    def det(fs):
        return fs[0](y[:, 0]) * fs[1](y[:, 1]) - fs[0](y[:, 1]) * fs[1](y[:, 0])

    direct = np.dot(w, det(phis) * det(bars))
    assert np.linalg.det(andreief_matrix(phis, bars)) == pytest.approx(direct, abs=1e-7)


def test_andreief_zero_function():
    phis = [lambda x: 0.0 * x, lambda x: heat_kernel(1.0, 0.0, x)]
    assert np.linalg.det(andreief_matrix(phis, phis)) == 0.0
