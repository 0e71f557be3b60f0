"""
Tests for kernel evaluation, flat indexing and input validation.
"""

import numpy as np
import pytest

from ustatboot.exceptions import InvalidArgumentError
from ustatboot.kernels import (DataMatrix, KernelKind, KernelSpec, eval_cov_kernel,
                               eval_kendall_kernel, eval_mean_kernel, flat_index,
                               matrix_position, unvech, upper_triangle_size, vech)


@pytest.fixture
def rng():
    return np.random.default_rng(11)


@pytest.mark.parametrize("evaluator", [eval_mean_kernel, eval_cov_kernel, eval_kendall_kernel])
def test_kernels_are_exactly_symmetric(evaluator, rng):
    for _ in range(20):
        x1, x2 = rng.normal(size=(2, 5))
        assert np.array_equal(evaluator(x1, x2), evaluator(x2, x1))


@pytest.mark.parametrize("evaluator", [eval_mean_kernel, eval_cov_kernel, eval_kendall_kernel])
def test_kernels_reject_mismatched_lengths(evaluator):
    with pytest.raises(InvalidArgumentError):
        evaluator([1.0, 2.0], [1.0])


def test_mean_kernel_zero_case():
    assert np.array_equal(eval_mean_kernel([0.0, 0.0], [0.0, 0.0]), [0.0, 0.0])


def test_kendall_entries_are_indicators(rng):
    x = rng.integers(0, 3, size=(30, 4)).astype(float)
    for a in x:
        values = eval_kendall_kernel(a, x[0])
        assert set(np.unique(values)) <= {0.0, 1.0}


def test_cov_kernel_vanishes_on_the_diagonal(rng):
    x = rng.normal(size=6)
    assert not eval_cov_kernel(x, x).any()


@pytest.mark.parametrize("p", [1, 2, 3, 7, 64])
def test_flat_index_round_trip(p):
    for j in range(upper_triangle_size(p)):
        m, k = matrix_position(j, p)
        assert m <= k
        assert flat_index(m, k, p) == j


def test_flat_index_matches_triu_order():
    rows, cols = np.triu_indices(5)
    assert [flat_index(m, k, 5) for m, k in zip(rows, cols)] == list(range(15))
    assert flat_index(3, 1, 5) == flat_index(1, 3, 5)


def test_flat_index_rejects_out_of_range():
    with pytest.raises(InvalidArgumentError):
        flat_index(3, 0, 3)
    with pytest.raises(InvalidArgumentError):
        matrix_position(6, 3)


def test_vech_and_unvech(rng):
    a = rng.normal(size=(4, 4))
    sym = a + a.T
    assert np.array_equal(unvech(vech(sym), 4), sym)


def test_data_matrix_validation():
    with pytest.raises(InvalidArgumentError):
        DataMatrix([[1.0, 2.0]])
    with pytest.raises(InvalidArgumentError, match="row 1, column 0"):
        DataMatrix([[1.0], [np.nan]])
    column = DataMatrix([1.0, 2.0, 3.0])
    assert (column.n, column.p) == (3, 1)
    assert not column.values.flags.writeable


def test_data_matrix_select_checks_indices():
    data = DataMatrix([[0.0], [1.0], [2.0]])
    assert np.array_equal(data.select(np.array([2, 2, 0])).values[:, 0], [2.0, 2.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        data.select(np.array([0, 3, 1]))


def test_kernel_spec_dimensions():
    cov = KernelSpec.covariance(4)
    assert cov.output_dim == 10 and cov.matrix_structured
    assert KernelSpec.from_name("kendall", 3).kind == KernelKind.KENDALL
    assert KernelSpec.mean(3).output_dim == 3
    with pytest.raises(InvalidArgumentError):
        KernelSpec.from_name("median", 3)
    with pytest.raises(InvalidArgumentError):
        KernelSpec.custom(lambda a, b: a + b, 2, 4, matrix_structured=True)


def test_kernel_spec_checks_data_width():
    with pytest.raises(InvalidArgumentError):
        KernelSpec.covariance(3).check_data(DataMatrix(np.zeros((4, 2))))


def test_off_diagonal_mask_needs_matrix_structure():
    mask = KernelSpec.covariance(3).off_diagonal_mask()
    assert mask.sum() == 3
    with pytest.raises(InvalidArgumentError):
        KernelSpec.mean(3).off_diagonal_mask()


def test_custom_kernel_output_length_is_checked():
    kernel = KernelSpec.custom(lambda a, b: np.concatenate([a, b]), 1, 1)
    with pytest.raises(InvalidArgumentError):
        kernel.evaluate([1.0], [2.0])


def test_evaluate_against_matches_pairwise(rng):
    x = rng.normal(size=(6, 3))
    for kernel in (KernelSpec.mean(3), KernelSpec.covariance(3), KernelSpec.kendall(3)):
        block = kernel.evaluate_against(x[0], x)
        expected = np.vstack([kernel.evaluate(x[0], row) for row in x])
        assert np.allclose(block, expected, rtol=0, atol=1e-15)
