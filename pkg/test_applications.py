"""
Tests for covariance thresholding, matrix norms and the simultaneous tests.
"""

import math

import numpy as np
import pytest

from ustatboot.applications import CovarianceInference
from ustatboot.bootstrap import BootstrapMethod, StatFunctional, StatScale
from ustatboot.config import EngineSettings
from ustatboot.exceptions import DegeneracyError, InvalidArgumentError, NumericalError
from ustatboot.kernels import DataMatrix, KernelSpec
from ustatboot.ustat import UStatCalculator, sample_covariance


@pytest.fixture
def inference():
    return CovarianceInference()


def gaussian(seed, n, sigma):
    rng = np.random.default_rng(seed)
    factor = np.linalg.cholesky(sigma)
    return DataMatrix(rng.normal(size=(n, sigma.shape[0])) @ factor.T)


def test_threshold_rejects_negative_tau():
    with pytest.raises(InvalidArgumentError):
        CovarianceInference.threshold_matrix(np.eye(2), -0.1)
    with pytest.raises(InvalidArgumentError):
        CovarianceInference.threshold_matrix(np.ones((2, 3)), 0.1)


def test_threshold_keep_diag():
    S = np.array([[0.2, 0.5], [0.5, 3.0]])
    assert np.array_equal(CovarianceInference.threshold_matrix(S, 1.0), [[0.0, 0.0], [0.0, 3.0]])
    kept = CovarianceInference.threshold_matrix(S, 1.0, keep_diag=True)
    assert np.array_equal(kept, [[0.2, 0.0], [0.0, 3.0]])


def test_support_shrinks_with_tau():
    a = np.random.default_rng(0).normal(size=(8, 8))
    S = a + a.T
    previous = np.ones_like(S, dtype=bool)
    for tau in np.linspace(0.0, 4.0, 25):
        thresholded = CovarianceInference.threshold_matrix(S, tau)
        support = thresholded != 0.0
        assert np.all(support <= previous)
        kept = thresholded[support]
        assert np.array_equal(kept, S[support])
        previous = support


def test_select_threshold_beta(inference):
    data = gaussian(1, 200, np.eye(4))
    full = inference.select_threshold(data, alpha=0.05, beta=1.0, B=300, seed=9)
    half = inference.select_threshold(data, alpha=0.05, beta=0.5, B=300, seed=9)
    assert full.tau_star == full.quantile
    assert half.tau_star == 2.0 * full.tau_star
    S = sample_covariance(data.values)
    expected = np.where(np.abs(S) > full.tau_star, S, 0.0)
    assert np.array_equal(full.thresholded, expected)


def test_select_threshold_matches_rescaled_quantile(inference):
    data = gaussian(2, 150, np.eye(3))
    result = inference.select_threshold(data, alpha=0.1, B=200, seed=4)
    draws = inference.engine.run_bootstrap(data, KernelSpec.covariance(3),
                                           BootstrapMethod.MULTIPLIER,
                                           StatFunctional.abs_max(StatScale.RESCALED),
                                           B=200, seed=4)
    assert result.quantile == inference.engine.quantile(draws, 0.9).value


@pytest.mark.parametrize("factor", [2.0, 3.0])
def test_threshold_scales_quadratically(inference, factor):
    data = gaussian(3, 120, np.eye(3))
    base = inference.select_threshold(data, B=200, seed=1).tau_star
    scaled = inference.select_threshold(data.scaled(factor), B=200, seed=1).tau_star
    assert math.isclose(scaled, factor ** 2 * base, rel_tol=1e-12)


def test_select_threshold_errors(inference):
    with pytest.raises(DegeneracyError):
        inference.select_threshold(DataMatrix(np.ones((10, 3))), B=50)
    with pytest.raises(InvalidArgumentError):
        inference.select_threshold(gaussian(0, 20, np.eye(2)), beta=0.0, B=50)
    with pytest.raises(InvalidArgumentError):
        inference.select_threshold(DataMatrix([[0.0], [1.0]]), B=50)


def test_matrix_norms_general(inference):
    rng = np.random.default_rng(5)
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    A = q @ np.diag([5.0, -3.0, 1.0, 0.5]) @ q.T
    norms = inference.matrix_norms(A)
    assert math.isclose(norms.spectral, 5.0, rel_tol=1e-8)
    assert math.isclose(norms.frobenius, math.sqrt(25 + 9 + 1 + 0.25), rel_tol=1e-12)
    assert math.isclose(norms.l1, np.abs(A).sum(axis=0).max())
    assert norms.sup >= norms.off_sup


def test_spectral_equals_frobenius_on_rank_one(inference):
    v = np.random.default_rng(6).normal(size=7)
    norms = inference.matrix_norms(np.outer(v, v))
    assert math.isclose(norms.spectral, v @ v, rel_tol=1e-10)
    assert math.isclose(norms.frobenius, v @ v, rel_tol=1e-10)


def test_matrix_norms_symmetry_contract(inference):
    with pytest.raises(InvalidArgumentError):
        inference.matrix_norms([[1.0, 2.0], [0.0, 1.0]])
    nearly = np.array([[1.0, 0.5 + 1e-10], [0.5, 1.0]])
    assert math.isclose(inference.matrix_norms(nearly).spectral, 1.5, rel_tol=1e-9)


def test_power_iteration_restarts_outside_null_space(inference):
    assert math.isclose(inference.spectral_norm(np.array([[1.0, -1.0], [-1.0, 1.0]])), 2.0,
                        rel_tol=1e-10)
    assert inference.spectral_norm(np.zeros((3, 3))) == 0.0


def test_power_iteration_escapes_smaller_eigenvector(inference):
    # the all-ones start is an eigenvector for the smaller eigenvalue in both cases
    assert math.isclose(inference.spectral_norm(np.array([[2.0, -1.0], [-1.0, 2.0]])), 3.0,
                        rel_tol=1e-8)
    A = 2.0 * np.eye(5) - 0.3 * np.ones((5, 5))
    assert math.isclose(inference.matrix_norms(A).spectral, 2.0, rel_tol=1e-8)


def test_power_iteration_reports_non_convergence():
    inference = CovarianceInference(EngineSettings(power_max_iter=3))
    A = np.diag([1.0, 0.99, 0.5])
    with pytest.raises(NumericalError) as excinfo:
        inference.spectral_norm(A)
    assert excinfo.value.diagnostics["iterations"] == 3
    assert "relative_change" in excinfo.value.diagnostics


def test_cov_test_at_sample_covariance(inference):
    data = gaussian(7, 100, np.eye(4))
    outcome = inference.simultaneous_cov_test(data, sample_covariance(data.values), B=200, seed=2)
    assert outcome.statistic == pytest.approx(0.0, abs=1e-14)
    assert not outcome.reject
    assert outcome.pvalue == 1.0


def test_cov_test_with_constant_column(inference):
    rng = np.random.default_rng(15)
    x = np.hstack([rng.normal(size=(50, 1)), np.full((50, 1), 3.0)])
    outcome = inference.simultaneous_cov_test(DataMatrix(x), sample_covariance(x), B=200, seed=1)
    assert outcome.statistic == 0.0
    assert outcome.critical == 0.0
    assert not outcome.reject
    assert outcome.pvalue == 1.0


def test_cov_test_detects_correlation(inference):
    sigma = 0.5 * np.eye(5) + 0.5 * np.ones((5, 5))
    outcome = inference.simultaneous_cov_test(gaussian(8, 300, sigma), np.eye(5), B=300, seed=3)
    assert outcome.reject
    assert outcome.pvalue == pytest.approx(1.0 / 301.0)


def test_cov_test_statistic_and_duality(inference):
    sigma = np.eye(4)
    sigma[0, 1] = sigma[1, 0] = 0.15
    kernel = KernelSpec.covariance(4)
    for seed in range(6):
        data = gaussian(20 + seed, 150, sigma)
        outcome = inference.simultaneous_cov_test(data, np.eye(4), alpha=0.1, B=200, seed=seed)
        off = ~np.eye(4, dtype=bool)
        assert outcome.statistic == pytest.approx(
            np.abs(sample_covariance(data.values) - np.eye(4))[off].max(), rel=1e-12)
        draws = inference.engine.run_bootstrap(data, kernel, BootstrapMethod.MULTIPLIER,
                                               StatFunctional.off_diag_abs_max(StatScale.RESCALED),
                                               B=200, seed=seed)
        rank = math.ceil(round(0.9 * 200, 9))
        assert outcome.reject == (np.count_nonzero(draws.values <= outcome.statistic) >= rank)
        assert 0.0 < outcome.pvalue <= 1.0


def test_full_mask_uses_every_entry(inference):
    data = gaussian(9, 80, np.eye(3))
    outcome = inference.simultaneous_cov_test(data, 2.0 * np.eye(3), B=100, mask="full")
    diff = np.abs(sample_covariance(data.values) - 2.0 * np.eye(3))
    assert outcome.statistic == pytest.approx(diff.max(), rel=1e-12)
    assert outcome.mask == "full"
    with pytest.raises(InvalidArgumentError):
        inference.simultaneous_cov_test(data, np.eye(3), mask="diag")


def test_cov_test_input_errors(inference):
    data = gaussian(10, 30, np.eye(3))
    with pytest.raises(InvalidArgumentError):
        inference.simultaneous_cov_test(data, np.eye(4), B=50)
    asymmetric = np.eye(3)
    asymmetric[0, 2] = 0.3
    with pytest.raises(InvalidArgumentError):
        inference.simultaneous_cov_test(data, asymmetric, B=50)
    with pytest.raises(InvalidArgumentError):
        inference.simultaneous_test(data, KernelSpec.mean(3), np.zeros(3), B=50)


def test_kendall_test_at_estimate(inference):
    data = gaussian(11, 80, np.eye(3))
    kernel = KernelSpec.kendall(3)
    u = UStatCalculator().compute_ustat(data, kernel).u
    outcome = inference.kendall_test(data, kernel.to_matrix(u), B=200, seed=1)
    assert outcome.statistic == 0.0
    assert not outcome.reject


def test_kendall_test_comonotone_columns(inference):
    column = np.random.default_rng(12).normal(size=(60, 1))
    data = DataMatrix(np.hstack([column, column, column]))
    outcome = inference.kendall_test(data, np.full((3, 3), 0.5), B=100, seed=0)
    assert outcome.statistic == 0.5
    assert outcome.reject


def test_kendall_null_range(inference):
    data = gaussian(13, 30, np.eye(2))
    with pytest.raises(InvalidArgumentError):
        inference.kendall_test(data, [[1.0, 1.2], [1.2, 1.0]], B=50)


def test_error_bound_constants():
    bounds = CovarianceInference.thresholding_error_bounds(zeta_p=3.0, a=0.2)
    assert bounds.spectral == pytest.approx(6.0 * 3.0 * 0.2)
    assert bounds.frobenius == pytest.approx(18.0 * 3.0 * 0.2 ** 2)
    general = CovarianceInference.thresholding_error_bounds(zeta_p=2.0, a=0.25, r=0.5, beta=0.5)
    assert general.spectral == pytest.approx((4.0 / math.sqrt(0.5) + 1.0) * 2.0 * 0.5)
    with pytest.raises(InvalidArgumentError):
        CovarianceInference.thresholding_error_bounds(zeta_p=1.0, a=0.1, r=0.5, beta=1.0)
    with pytest.raises(InvalidArgumentError):
        CovarianceInference.thresholding_error_bounds(zeta_p=1.0, a=0.1, r=1.0)


def test_sparsity_radius():
    sigma = np.array([[1.0, 0.25, 0.0], [0.25, 1.0, 0.0], [0.0, 0.0, 1.0]])
    assert CovarianceInference.sparsity_radius(sigma) == 2.0
    assert CovarianceInference.sparsity_radius(sigma, r=0.5) == pytest.approx(1.5)


def test_oracle_estimators():
    data = gaussian(14, 50, np.eye(3))
    S = sample_covariance(data.values)
    assert CovarianceInference.oracle_threshold(data, np.eye(3)) == np.abs(S - np.eye(3)).max()
    support = CovarianceInference.support_oracle_estimator(data, np.eye(3))
    assert np.array_equal(support, np.diag(np.diag(S)))


def test_thresholded_error_within_bounds_on_good_event(inference):
    p = 10
    sigma = np.eye(p) + 0.4 * (np.eye(p, k=1) + np.eye(p, k=-1))
    zeta = CovarianceInference.sparsity_radius(sigma)
    checked = 0
    for seed in range(15):
        data = gaussian(200 + seed, 300, sigma)
        result = inference.select_threshold(data, alpha=0.05, beta=1.0, B=300, seed=seed)
        if CovarianceInference.oracle_threshold(data, sigma) > result.tau_star:
            continue
        checked += 1
        error = result.thresholded - sigma
        bounds = inference.thresholding_error_bounds(zeta, result.tau_star)
        assert np.linalg.norm(error, 2) <= bounds.spectral
        assert np.sum(error ** 2) / p <= bounds.frobenius
    assert checked > 0


@pytest.mark.slow
def test_threshold_tracks_oracle_percentile(inference):
    n, p = 300, 10
    rng = np.random.default_rng(2024)
    deviations = []
    for _ in range(1000):
        x = rng.normal(size=(n, p))
        deviations.append(np.abs(sample_covariance(x) - np.eye(p)).max())
    oracle = np.quantile(deviations, 0.95)
    for seed in range(5):
        data = gaussian(300 + seed, n, np.eye(p))
        tau = inference.select_threshold(data, alpha=0.05, beta=1.0, B=1000, seed=seed).tau_star
        assert 0.5 * oracle <= tau <= 2.0 * oracle
