import numpy as np
import pytest

from nclab.montecarlo import (
    PathSample,
    SimulationConfig,
    block_rng,
    estimate_onepoint,
    estimate_twotime,
    propagate_conditioned,
    sample_initial,
    simulate,
)
from nclab.stochastic import survival_probability


@pytest.fixture(scope="module")
def small_sample():
    config = SimulationConfig(n=2, paths=3000, seed=7, block_size=1000)
    return simulate(config, (0.05, 0.5, 1.0))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n": 3},
        {"delta": 0.0},
        {"delta": 0.5},
        {"dt": 0.01},
        {"paths": 0},
        {"seed": -1},
        {"seed": 2**64},
        {"burn_in": 999},
        {"block_size": 0},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SimulationConfig(**kwargs)


def test_grid():
    config = SimulationConfig()
    assert config.steps == 190
    assert config.grid[0] == 0.05 and config.grid[-1] == 1.0
    assert config.grid_index(0.5) == 90
    with pytest.raises(ValueError):
        config.grid_index(0.5012)
    with pytest.raises(ValueError):
        config.grid_index(1.5)


def test_paths_stay_ordered(small_sample):
    assert small_sample.positions.shape == (3000, 3, 2)
    assert np.all(np.diff(small_sample.positions, axis=-1) > 0)
    np.testing.assert_allclose(small_sample.times, [0.05, 0.5, 1.0])
    assert small_sample.paths == 3000
    with pytest.raises(ValueError):
        small_sample.at(0.7)


def test_initial_acceptance_rate_is_reasonable(small_sample):
    assert 0.1 <= small_sample.acceptance <= 0.7


def test_determinism_and_thread_independence():
    config = SimulationConfig(paths=700, seed=99, block_size=128)
    a = simulate(config, (1.0,), threads=1)
    b = simulate(config, (1.0,), threads=3)
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.attempts, b.attempts)
    c = simulate(SimulationConfig(paths=700, seed=100, block_size=128), (1.0,))
    assert not np.array_equal(a.positions, c.positions)


def test_single_particle_never_restarts():
    config = SimulationConfig()
    start = np.zeros((200, 1))
    pos, attempts = propagate_conditioned(start, config, block_rng(3, 0))
    assert np.all(attempts == 1)
    # a free Brownian motion over T - delta
    assert pos[:, 0, 0].var() == pytest.approx(0.95, rel=0.3)


def test_acceptance_matches_survival_probability():
    config = SimulationConfig()
    start = np.tile([0.0, 0.4], (10_000, 1))
    _, attempts = propagate_conditioned(start, config, block_rng(1, 0))
    trials = attempts.sum()
    p = start.shape[0] / trials
    expect = survival_probability(config.horizon - config.delta, [0.0, 0.4])
    assert abs(p - expect) < 4 * np.sqrt(expect * (1 - expect) / trials)


def test_start_must_be_ordered():
    with pytest.raises(ValueError):
        propagate_conditioned([[0.3, 0.1]], SimulationConfig(), block_rng(0, 0))


def test_initial_samples_are_ordered():
    config = SimulationConfig()
    x, rate = sample_initial(config, 500, block_rng(5, 0))
    assert x.shape == (500, 2)
    assert np.all(np.diff(x, axis=1) > 0)
    assert 0 < rate < 1


def test_onepoint_histogram_integrates_to_n(small_sample):
    est = estimate_onepoint(small_sample, 1.0, [-50.0, -1.0, 0.0, 1.0, 50.0])
    assert np.sum(est.values * (est.upper - est.lower)) == pytest.approx(2.0, abs=1e-12)
    assert np.all(est.stderr > 0)
    with pytest.raises(ValueError):
        estimate_onepoint(small_sample, 1.0, [0.0, 0.0, 1.0])


def test_twotime_boxes(small_sample):
    est = estimate_twotime(small_sample, 0.5, 1.0, [((0.0, 0.0), (-1.0, 1.0)), ((-50, 50), (-50, 50))])
    assert est.values[0] == 0.0
    assert est.values[1] == pytest.approx(4.0)
    with pytest.raises(ValueError):
        estimate_twotime(small_sample, 1.0, 0.5, [((0, 1), (0, 1))])


def test_single_path_has_infinite_error():
    sample = PathSample(np.array([1.0]), np.array([[[0.0, 1.0]]]), np.array([1]), 0.5)
    est = estimate_onepoint(sample, 1.0, [-1.0, 2.0])
    assert np.isinf(est.stderr).all()


def _kernel_bin_means(t, horizon, edges):
    from scipy import integrate

    from nclab.kernels import CorrelationKernel
    from nclab.stochastic import TimePartition

    part = TimePartition((t, horizon)) if t < horizon else TimePartition((horizon,))
    kernel = CorrelationKernel(2, part)
    return np.array(
        [integrate.quad(lambda x: kernel.density(t, x), a, b, epsabs=1e-12)[0] / (b - a) for a, b in zip(edges[:-1], edges[1:])]
    )


@pytest.mark.slow
def test_initial_marginal_matches_density():
    config = SimulationConfig()
    x, _ = sample_initial(config, 100_000, block_rng(config.seed, 0))
    sample = PathSample(np.array([config.delta]), x[:, None, :], np.ones(len(x), dtype=int), 0.0)
    edges = np.linspace(-0.6, 0.6, 25)
    est = estimate_onepoint(sample, config.delta, edges)
    exact = _kernel_bin_means(config.delta, config.horizon, edges)
    assert np.max(np.abs(est.values - exact) / est.stderr) < 3.0


def test_halving_dt_changes_acceptance_little():
    start = np.tile([0.0, 0.4], (10_000, 1))
    rates = []
    for dt in (0.005, 0.0025):
        _, attempts = propagate_conditioned(start, SimulationConfig(dt=dt), block_rng(2, 0))
        rates.append(start.shape[0] / attempts.sum())
    assert abs(rates[1] - rates[0]) / rates[0] < 0.02


@pytest.mark.slow
def test_halving_delta_leaves_density_unbiased():
    edges = np.linspace(-2.5, 2.5, 21)
    exact = _kernel_bin_means(1.0, 1.0, edges)
    for delta in (0.05, 0.025):
        config = SimulationConfig(delta=delta, dt=delta / 10, paths=100_000)
        est = estimate_onepoint(simulate(config, (1.0,)), 1.0, edges)
        assert np.max(np.abs(est.values - exact) / est.stderr) < 3.0
