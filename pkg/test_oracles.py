"""
Tests for the brute-force oracles and their registry.
"""

import numpy as np
import pytest

import oracles
from ustatboot import bootstrap, ustat
from ustatboot.bootstrap import StatFunctional
from ustatboot.exceptions import ResourceLimitError
from ustatboot.kernels import DataMatrix, KernelSpec
from ustatboot.ustat import UStatCalculator


def test_every_fast_path_has_an_oracle():
    assert oracles.missing_oracles(list(ustat.FAST_PATHS) + list(bootstrap.FAST_PATHS)) == []
    assert oracles.missing_oracles(["ustat/median"]) == ["ustat/median"]


def test_size_guards():
    wide = DataMatrix(np.zeros((oracles.ORACLE_N_LIMIT + 1, 1)))
    with pytest.raises(ResourceLimitError):
        oracles.oracle_ustat(wide, KernelSpec.mean(1))
    long = DataMatrix(np.zeros((oracles.TRIPLE_SUM_N_LIMIT + 1, 1)))
    with pytest.raises(ResourceLimitError):
        oracles.oracle_jackknife_triple_sum(long, KernelSpec.mean(1))
    six = DataMatrix(np.arange(6.0).reshape(6, 1))
    with pytest.raises(ResourceLimitError):
        oracles.oracle_eb_enumeration(six, KernelSpec.mean(1), StatFunctional.max())


def test_compare_reports_offending_entries():
    report = oracles.compare("demo", [1.0, 2.0, 3.0], [1.0, 2.5, 3.0 + 1e-12], tolerance=1e-9)
    assert not report.passed
    assert report.details == {1: 0.5}
    assert report.max_abs_error == 0.5
    assert oracles.compare("ok", [1.0], [1.0], tolerance=0.0).passed


@pytest.mark.parametrize("seed", range(100))
def test_covariance_ustat_against_oracle(seed):
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(2, 13))
    p = int(rng.integers(1, 5))
    data = DataMatrix(rng.normal(size=(n, p)))
    kernel = KernelSpec.covariance(p)
    fast = UStatCalculator().compute_ustat(data, kernel).u
    report = oracles.compare("ustat/cov", fast, oracles.oracle_ustat(data, kernel), 1e-12)
    assert report.passed, report.details


def test_vstat_oracle_matches_summary():
    data = DataMatrix(np.random.default_rng(3).normal(size=(9, 2)))
    for kernel in (KernelSpec.mean(2), KernelSpec.covariance(2), KernelSpec.kendall(2)):
        summary = UStatCalculator().compute_ustat(data, kernel)
        assert np.allclose(summary.v, oracles.oracle_vstat(data, kernel), rtol=1e-12, atol=1e-14)


def test_split_sum_oracle():
    data = DataMatrix(np.random.default_rng(4).normal(size=(11, 3)))
    kernel = KernelSpec.covariance(3)
    assert np.allclose(UStatCalculator().split_sum(data, kernel),
                       oracles.oracle_split_sum(data, kernel), rtol=1e-12, atol=1e-15)


def test_enumerated_law_cdf():
    law = oracles.EnumeratedLaw(support=np.array([0.0, 1.0]),
                                probabilities=np.array([0.25, 0.75]), mean=np.zeros(1))
    assert np.allclose(law.cdf(np.array([-1.0, 0.0, 0.5, 1.0, 2.0])), [0.0, 0.25, 0.25, 1.0, 1.0])
    assert oracles.cdf_distance(law, [0.0, 1.0]) == 0.25
    assert oracles.cdf_distance(law, [0.0, 1.0, 1.0, 1.0]) == 0.0


def test_enumerated_probabilities_sum_to_one():
    data = DataMatrix([[0.0, 1.0], [2.0, -1.0], [1.0, 3.0]])
    law = oracles.oracle_eb_enumeration(data, KernelSpec.covariance(2), StatFunctional.abs_max())
    assert np.isclose(law.probabilities.sum(), 1.0)
    assert np.all(np.diff(law.support) > 0)
