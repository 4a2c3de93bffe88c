# Copyright (c) 2026 stap-glm contributors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
import math
import pickle

import numpy as np
import pytest

from stapcore.diagnostics import split_rhat
from stapcore.errors import AllDivergentWarmupError, ConfigError, InitializationError
from stapcore.nuts import (
    DualAveraging,
    PhasePoint,
    SamplerConfig,
    WindowedAdaptation,
    hamiltonian,
    leapfrog,
    sample_chain,
)


class GaussianTarget:
    """Zero-mean multivariate normal given by its covariance."""

    def __init__(self, covariance: np.ndarray) -> None:
        self.covariance = np.atleast_2d(covariance)
        self.precision = np.linalg.inv(self.covariance)
        self.dim = self.covariance.shape[0]

    def log_density_gradient(self, params: np.ndarray) -> tuple:
        gradient = -self.precision @ params
        return 0.5 * float(params @ gradient), gradient


class NowhereTarget:
    dim = 3

    def log_density_gradient(self, params: np.ndarray) -> tuple:
        return -math.inf, np.zeros(self.dim)


def _run(target, chains: int = 1, **kwargs):
    config = SamplerConfig(**{"iter": 300, "warmup": 150, "seed": 42, **kwargs})
    return [sample_chain(target, config, chain_id) for chain_id in range(chains)]


def test_leapfrog_free_particle():
    point = leapfrog(np.zeros(2), np.array([1.0, -2.0]), 0.5, lambda x: (0.0, np.zeros(2)))
    np.testing.assert_allclose(point.position, [0.5, -1.0])
    np.testing.assert_allclose(point.momentum, [1.0, -2.0])


def test_leapfrog_conserves_energy():
    target = GaussianTarget(np.eye(2))
    inv_metric = np.ones(2)
    position, momentum = np.array([1.0, 0.5]), np.array([-0.3, 0.8])
    log_density, gradient = target.log_density_gradient(position)
    start = PhasePoint(position, momentum, log_density, gradient)
    point = start
    for _ in range(100):
        point = leapfrog(point.position, point.momentum, 0.01, target.log_density_gradient,
                         inv_metric, point.gradient)
    assert abs(hamiltonian(point, inv_metric) - hamiltonian(start, inv_metric)) < 1e-4


def test_leapfrog_is_reversible():
    target = GaussianTarget(np.array([[1.0, 0.3], [0.3, 2.0]]))
    inv_metric = np.array([0.5, 2.0])
    position, momentum = np.array([0.7, -1.1]), np.array([0.4, 0.9])
    point = PhasePoint(position, momentum, *target.log_density_gradient(position))
    for _ in range(25):
        point = leapfrog(point.position, point.momentum, 0.1, target.log_density_gradient,
                         inv_metric, point.gradient)
    point = point._replace(momentum=-point.momentum)
    for _ in range(25):
        point = leapfrog(point.position, point.momentum, 0.1, target.log_density_gradient,
                         inv_metric, point.gradient)
    np.testing.assert_allclose(point.position, position, atol=1e-12)
    np.testing.assert_allclose(-point.momentum, momentum, atol=1e-12)


def test_same_seed_same_draws():
    target = GaussianTarget(np.eye(3))
    first = _run(target, chains=2)
    second = _run(target, chains=2)
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.draws, b.draws)
        np.testing.assert_array_equal(a.energy, b.energy)
    assert not np.array_equal(first[0].draws, first[1].draws)
    other_seed = _run(target, seed=43)[0]
    assert not np.array_equal(first[0].draws, other_seed.draws)


def test_chain_output_shapes():
    chain = _run(GaussianTarget(np.eye(3)))[0]
    assert chain.draws.shape == (150, 3)
    for series in (chain.divergent, chain.treedepth, chain.accept_stat, chain.energy,
                   chain.n_leapfrog, chain.lp):
        assert series.shape == (150,)
    assert np.all((chain.accept_stat >= 0) & (chain.accept_stat <= 1))
    assert np.all(chain.n_leapfrog >= 1)
    assert chain.step_size > 0
    assert chain.inv_metric.shape == (3,)


def test_tree_depth_is_capped():
    target = GaussianTarget(np.diag([1e-4, 1e4]))
    chain = _run(target, iter=40, warmup=0, max_treedepth=3)[0]
    assert chain.treedepth.max() <= 3
    assert np.all(chain.n_leapfrog <= 2 ** 3 - 1)
    assert chain.max_treedepth_hits > 0


def test_initialization_failure():
    with pytest.raises(InitializationError, match="no finite log density"):
        _run(NowhereTarget())


def test_initial_value_with_zero_density():
    with pytest.raises(InitializationError, match="zero density"):
        sample_chain(NowhereTarget(), SamplerConfig(iter=10, warmup=5), 0, init=np.zeros(3))


def test_divergent_warmup_error_pickles():
    error = pickle.loads(pickle.dumps(AllDivergentWarmupError(2, 500)))
    assert error.chain_id == 2
    assert error.warmup == 500
    assert "All 500 warmup iterations of chain 2" in str(error)


@pytest.mark.parametrize("kwargs", [
    {"iter": 0},
    {"iter": 100, "warmup": 100},
    {"warmup": -1},
    {"chains": 0},
    {"cores": 0},
    {"adapt_delta": 1.0},
    {"adapt_delta": 0.0},
    {"max_treedepth": 0},
    {"seed": -1},
])
def test_invalid_sampler_config(kwargs):
    with pytest.raises(ConfigError):
        SamplerConfig(**kwargs)


def test_sampler_config_defaults():
    config = SamplerConfig()
    assert (config.iter, config.warmup, config.chains) == (2000, 1000, 4)
    assert config.adapt_delta == 0.8
    assert config.max_treedepth == 10
    assert config.draws == 1000


def test_dual_averaging_direction():
    rising = DualAveraging(0.8)
    falling = DualAveraging(0.8)
    for _ in range(50):
        high = rising.learn(1.0)
        low = falling.learn(0.1)
    assert high > 1.0 > low
    assert rising.final_step_size > falling.final_step_size


def test_metric_window_schedule():
    adaptation = WindowedAdaptation(1000, 2)
    rng = np.random.default_rng(0)
    ends = [i for i in range(1000) if adaptation.learn(rng.normal(size=2)) is not None]
    assert ends == [99, 149, 249, 449, 949]


def test_short_warmup_schedule():
    adaptation = WindowedAdaptation(100, 1)
    ends = [i for i in range(100) if adaptation.learn(np.array([float(i)])) is not None]
    assert ends == [89]
    disabled = WindowedAdaptation(10, 1)
    assert all(disabled.learn(np.zeros(1)) is None for _ in range(10))


def test_metric_estimate_is_regularized():
    adaptation = WindowedAdaptation(100, 2)
    rng = np.random.default_rng(1)
    samples = []
    variance = None
    for i in range(100):
        position = rng.normal(size=2) * [1.0, 10.0]
        if 15 <= i < 90:
            samples.append(position)
        result = adaptation.learn(position)
        if result is not None:
            variance = result
    n = len(samples)
    expected = n / (n + 5.0) * np.var(samples, axis=0, ddof=1) + 1e-3 * 5.0 / (n + 5.0)
    np.testing.assert_allclose(variance, expected)


@pytest.mark.slow
@pytest.mark.parametrize("covariance", [
    np.eye(10),
    np.array([[1.0, 0.9], [0.9, 1.0]]),
])
def test_recovers_gaussian_moments(covariance):
    target = GaussianTarget(covariance)
    chains = _run(target, chains=4, iter=2000, warmup=1000)
    draws = np.stack([chain.draws for chain in chains])
    pooled = draws.reshape(-1, target.dim)
    np.testing.assert_allclose(pooled.mean(axis=0), 0.0, atol=0.08)
    np.testing.assert_allclose(pooled.std(axis=0), 1.0, atol=0.08)
    for k in range(target.dim):
        assert split_rhat(draws[:, :, k]) < 1.01
    divergences = sum(chain.divergences for chain in chains)
    assert divergences < 0.01 * pooled.shape[0]


@pytest.mark.slow
def test_higher_adapt_delta_gives_smaller_steps():
    target = GaussianTarget(np.eye(10))
    loose = _run(target, iter=1000, warmup=500, adapt_delta=0.8)[0]
    strict = _run(target, iter=1000, warmup=500, adapt_delta=0.99)[0]
    assert strict.step_size < loose.step_size
    assert strict.accept_stat.mean() > loose.accept_stat.mean()
