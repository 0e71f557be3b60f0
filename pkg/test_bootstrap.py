"""
Tests for the bootstrap engine: single draws, replicate streams, functionals
and quantiles.
"""

import math
import warnings

import numpy as np
import pytest

from oracles import (cdf_distance, oracle_eb_enumeration, oracle_empirical_draw,
                     oracle_reweighted_draw)
from ustatboot.bootstrap import (BootstrapDraws, BootstrapEngine, BootstrapMethod,
                                 StatFunctional, StatScale)
from ustatboot.config import EngineSettings
from ustatboot.exceptions import CostWarning, InvalidArgumentError
from ustatboot.kernels import DataMatrix, KernelSpec
from ustatboot.random_streams import ReplicateStreams
from ustatboot.ustat import UStatCalculator

METHODS = list(BootstrapMethod)


@pytest.fixture
def engine():
    return BootstrapEngine()


@pytest.fixture
def data():
    return DataMatrix(np.random.default_rng(21).normal(size=(12, 3)))


def kernels(p):
    return [KernelSpec.mean(p), KernelSpec.covariance(p), KernelSpec.kendall(p)]


def test_multiplier_draw_is_linear(engine, data):
    hajek = UStatCalculator().compute_hajek(data, KernelSpec.covariance(3))
    e = np.random.default_rng(0).normal(size=data.n)
    base = engine.multiplier_draw(hajek, e)
    assert np.array_equal(engine.multiplier_draw(hajek, 2.0 * e), 2.0 * base)
    assert np.array_equal(engine.multiplier_draw(hajek, -e), -base)
    assert not engine.multiplier_draw(hajek, np.zeros(data.n)).any()
    with pytest.raises(InvalidArgumentError):
        engine.multiplier_draw(hajek, e[:-1])


def test_empirical_draw_matches_literal_resample(engine, data):
    calc = UStatCalculator()
    idx = np.random.default_rng(1).integers(0, data.n, size=data.n)
    for kernel in kernels(3):
        summary = calc.compute_ustat(data, kernel)
        fast = engine.empirical_draw(summary, data, kernel, idx)
        assert np.allclose(fast, oracle_empirical_draw(data, kernel, idx), rtol=1e-10, atol=1e-12)


def test_empirical_draw_rejects_bad_indices(engine, data):
    kernel = KernelSpec.covariance(3)
    summary = UStatCalculator().compute_ustat(data, kernel)
    bad = np.zeros(data.n, dtype=int)
    bad[3] = data.n
    with pytest.raises(InvalidArgumentError):
        engine.empirical_draw(summary, data, kernel, bad)


@pytest.mark.parametrize("flat", [False, True])
def test_reweighted_draw_matches_weighted_double_sum(engine, data, flat):
    calc = UStatCalculator()
    w = 1.0 + np.random.default_rng(2).normal(size=data.n)
    for kernel in kernels(3):
        summary = calc.compute_ustat(data, kernel)
        fast = engine.reweighted_draw(summary, data, kernel, w, flat=flat)
        assert np.allclose(fast, oracle_reweighted_draw(data, kernel, w, flat=flat),
                           rtol=1e-10, atol=1e-12)


def test_flat_variant_differs_by_centering_correction(engine, data):
    kernel = KernelSpec.covariance(3)
    summary = UStatCalculator().compute_ustat(data, kernel)
    w = 1.0 + np.random.default_rng(3).normal(size=data.n)
    plain = engine.reweighted_draw(summary, data, kernel, w)
    flat = engine.reweighted_draw(summary, data, kernel, w, flat=True)
    correction = math.sqrt(data.n) * (w.mean() - 1.0) * summary.u
    assert np.allclose(flat, plain - correction, rtol=0.0, atol=1e-14)


def test_unit_weights_reproduce_u(engine, data):
    kernel = KernelSpec.covariance(3)
    summary = UStatCalculator().compute_ustat(data, kernel)
    assert np.allclose(engine.reweighted_draw(summary, data, kernel, np.ones(data.n)), 0.0,
                       atol=1e-13)


def test_multiplier_replicates_use_counter_streams(engine, data):
    kernel = KernelSpec.covariance(3)
    hajek = UStatCalculator().compute_hajek(data, kernel)
    draws = engine.run_bootstrap(data, kernel, BootstrapMethod.MULTIPLIER,
                                 StatFunctional.max(), B=5, seed=99)
    streams = ReplicateStreams(99)
    for b in range(5):
        e = ReplicateStreams.normals(streams.generator(b), data.n)
        assert np.isclose(draws.values[b], engine.multiplier_draw(hajek, e).max(),
                          rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("method", METHODS)
def test_draws_ignore_worker_count(data, method):
    kernel = KernelSpec.covariance(3)
    functional = StatFunctional.abs_max(StatScale.RESCALED)
    single = BootstrapEngine(EngineSettings(block_size=16, threads=1))
    pooled = BootstrapEngine(EngineSettings(block_size=16, threads=3))
    a = single.run_bootstrap(data, kernel, method, functional, B=100, seed=5)
    b = pooled.run_bootstrap(data, kernel, method, functional, B=100, seed=5)
    assert np.array_equal(a.values, b.values)
    assert a.values.shape == (100,) and np.all(np.isfinite(a.values))


@pytest.mark.parametrize("method", METHODS)
def test_functional_coherence(engine, data, method):
    kernel = KernelSpec.covariance(3)
    high = engine.run_bootstrap(data, kernel, method, StatFunctional.abs_max(), B=60, seed=8)
    mid = engine.run_bootstrap(data, kernel, method, StatFunctional.max(), B=60, seed=8)
    off = engine.run_bootstrap(data, kernel, method, StatFunctional.off_diag_abs_max(), B=60, seed=8)
    assert np.all(high.values >= mid.values)
    assert np.all(mid.values >= -high.values)
    assert np.all(off.values <= high.values)


def test_rescaled_scale(engine, data):
    kernel = KernelSpec.covariance(3)
    raw = engine.run_bootstrap(data, kernel, BootstrapMethod.MULTIPLIER,
                               StatFunctional.abs_max(), B=40, seed=1)
    rescaled = engine.run_bootstrap(data, kernel, BootstrapMethod.MULTIPLIER,
                                    StatFunctional.abs_max(StatScale.RESCALED), B=40, seed=1)
    assert np.allclose(rescaled.values, raw.values * 2.0 / math.sqrt(data.n), rtol=1e-14)


def test_functional_validation(engine, data):
    with pytest.raises(InvalidArgumentError):
        engine.run_bootstrap(data, KernelSpec.mean(3), BootstrapMethod.MULTIPLIER,
                             StatFunctional.off_diag_abs_max(), B=10)
    with pytest.raises(InvalidArgumentError):
        StatFunctional.rectangle([0.0, 1.0], [1.0, 0.5])
    rescaled_rect = StatFunctional(StatFunctional.rectangle([0.0], [1.0]).kind,
                                   StatScale.RESCALED, np.array([0.0]), np.array([1.0]))
    with pytest.raises(InvalidArgumentError):
        engine.run_bootstrap(DataMatrix([[0.0], [1.0], [3.0]]), KernelSpec.mean(1),
                             BootstrapMethod.MULTIPLIER, rescaled_rect, B=10)
    with pytest.raises(InvalidArgumentError):
        engine.run_bootstrap(data, KernelSpec.covariance(3), BootstrapMethod.MULTIPLIER,
                             StatFunctional.max(), B=0)


def test_rectangle_probabilities(engine, data):
    kernel = KernelSpec.covariance(3)
    everything = StatFunctional.rectangle(np.full(6, -np.inf), np.full(6, np.inf))
    draws = engine.run_bootstrap(data, kernel, BootstrapMethod.MULTIPLIER, everything, B=50)
    assert engine.rectangle_probability(draws) == 1.0
    point = StatFunctional.rectangle(np.full(6, 1e6), np.full(6, 1e6))
    draws = engine.run_bootstrap(data, kernel, BootstrapMethod.MULTIPLIER, point, B=50)
    assert engine.rectangle_probability(draws) == 0.0
    maxima = engine.run_bootstrap(data, kernel, BootstrapMethod.MULTIPLIER,
                                  StatFunctional.max(), B=50)
    with pytest.raises(InvalidArgumentError):
        engine.rectangle_probability(maxima)


def test_quantiles_are_monotone_attained_draws(engine, data):
    draws = engine.run_bootstrap(data, KernelSpec.covariance(3), BootstrapMethod.MULTIPLIER,
                                 StatFunctional.abs_max(), B=200, seed=4)
    levels = [0.01, 0.1, 0.5, 0.9, 0.95, 0.99]
    values = [q.value for q in engine.quantiles(draws, levels)]
    assert values == sorted(values)
    assert all(value in draws.values for value in values)
    for alpha in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(InvalidArgumentError):
            engine.quantile(draws, alpha)


def test_quantile_uses_ceiling_rank(engine):
    values = np.arange(1.0, 101.0)
    draws = BootstrapDraws(values, BootstrapMethod.MULTIPLIER, StatFunctional.max(), 0, 100)
    assert engine.quantile(draws, 0.07).value == 7.0
    assert engine.quantile(draws, 0.955).value == 96.0


def test_summary_statistics(engine, data):
    draws = engine.run_bootstrap(data, KernelSpec.covariance(3), BootstrapMethod.MULTIPLIER,
                                 StatFunctional.abs_max(), B=30)
    summary = draws.summary()
    assert summary["count"] == 30.0
    assert summary["min"] <= summary["50%"] <= summary["max"]


def test_cost_warning_for_slow_paths(data):
    engine = BootstrapEngine(EngineSettings(cost_budget=10.0))
    kendall = KernelSpec.kendall(3)
    with pytest.warns(CostWarning):
        engine.run_bootstrap(data, kendall, BootstrapMethod.EMPIRICAL, StatFunctional.max(), B=4)
    with warnings.catch_warnings():
        warnings.simplefilter("error", CostWarning)
        engine.run_bootstrap(data, kendall, BootstrapMethod.MULTIPLIER, StatFunctional.max(), B=4)
        engine.run_bootstrap(data, KernelSpec.covariance(3), BootstrapMethod.EMPIRICAL,
                             StatFunctional.max(), B=4)


def test_enumeration_two_points():
    data = DataMatrix([[0.0], [2.0]])
    kernel = KernelSpec.covariance(1)
    law = oracle_eb_enumeration(data, kernel, StatFunctional.abs_max())
    assert np.allclose(law.support, [math.sqrt(2) / 2])
    assert np.array_equal(law.probabilities, [1.0])
    signed = oracle_eb_enumeration(data, kernel, StatFunctional.max())
    assert np.allclose(signed.support, [-math.sqrt(2) / 2, math.sqrt(2) / 2])
    assert np.allclose(signed.probabilities, [0.5, 0.5])


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_enumerated_mean_is_zero(n):
    data = DataMatrix(np.arange(n * 2, dtype=float).reshape(n, 2) ** 2 % 7)
    law = oracle_eb_enumeration(data, KernelSpec.covariance(2), StatFunctional.max())
    assert np.allclose(law.mean, 0.0, atol=1e-12)


@pytest.mark.slow
@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_empirical_bootstrap_matches_enumeration(n):
    data = DataMatrix(np.random.default_rng(40 + n).normal(size=(n, 2)))
    kernel = KernelSpec.covariance(2)
    functional = StatFunctional.abs_max()
    law = oracle_eb_enumeration(data, kernel, functional)
    draws = BootstrapEngine().run_bootstrap(data, kernel, BootstrapMethod.EMPIRICAL,
                                            functional, B=200_000, seed=n)
    assert cdf_distance(law, draws.values) <= 0.01


@pytest.mark.slow
def test_multiplier_conditional_covariance():
    data = DataMatrix(np.random.default_rng(50).normal(size=(100, 5)))
    kernel = KernelSpec.covariance(5)
    calc = UStatCalculator()
    gamma = calc.multiplier_cov(calc.compute_hajek(data, kernel)).matrix
    B = 200_000
    replicates = BootstrapEngine().raw_replicates(data, kernel, BootstrapMethod.MULTIPLIER,
                                                  B=B, seed=17)
    empirical = replicates.T @ replicates / B
    standard_error = np.sqrt((np.outer(np.diag(gamma), np.diag(gamma)) + gamma ** 2) / B)
    assert np.all(np.abs(empirical - gamma) <= 5.0 * standard_error)
