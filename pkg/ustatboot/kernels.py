"""
Symmetric order-two kernels and the observation matrix they act on.

This module defines the kernel abstraction used by the U-statistic and
bootstrap engines, the three built-in kernels (mean, covariance, Kendall's
tau) and the flat upper-triangle indexing of matrix-valued kernel outputs.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Tuple

import numpy as np

from .exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)


class KernelKind(str, Enum):
    """Identifies the kernel family; the value is the CLI spelling."""

    MEAN = "mean"
    COVARIANCE = "cov"
    KENDALL = "kendall"
    CUSTOM = "custom"


def upper_triangle_size(p: int) -> int:
    """Number of entries (m, k) with m <= k of a p x p matrix."""
    return p * (p + 1) // 2


def flat_index(m: int, k: int, p: int) -> int:
    """
    Map a matrix position to its flat upper-triangle index.

    Positions are enumerated row by row over the upper triangle including the
    diagonal, the same order as ``np.triu_indices(p)``. A position below the
    diagonal is mapped through symmetry.

    Args:
        m: Row index in [0, p)
        k: Column index in [0, p)
        p: Matrix dimension

    Returns:
        Flat index j in [0, p(p+1)/2)
    """
    if not (0 <= m < p and 0 <= k < p):
        raise InvalidArgumentError(f"position ({m}, {k}) outside a {p}x{p} matrix")
    if m > k:
        m, k = k, m
    return m * p - m * (m - 1) // 2 + (k - m)


def matrix_position(j: int, p: int) -> Tuple[int, int]:
    """
    Inverse of :func:`flat_index`.

    Args:
        j: Flat index in [0, p(p+1)/2)
        p: Matrix dimension

    Returns:
        Tuple (m, k) with m <= k
    """
    d = upper_triangle_size(p)
    if not 0 <= j < d:
        raise InvalidArgumentError(f"flat index {j} outside [0, {d})")
    # Row m starts at m*p - m*(m-1)/2; count entries from the end of the triangle.
    remaining = d - 1 - j
    r = (math.isqrt(8 * remaining + 1) - 1) // 2
    m = p - 1 - r
    k = j - (m * p - m * (m - 1) // 2) + m
    return m, k


def triu_pairs(p: int) -> Tuple[np.ndarray, np.ndarray]:
    """Row and column arrays of the flat upper triangle, in flat-index order."""
    return np.triu_indices(p)


def vech(matrix: np.ndarray) -> np.ndarray:
    """Flatten the upper triangle (diagonal included) of a square matrix."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidArgumentError("vech requires a square matrix")
    rows, cols = triu_pairs(matrix.shape[0])
    return matrix[rows, cols]


def unvech(vector: np.ndarray, p: int) -> np.ndarray:
    """Rebuild the symmetric p x p matrix from its flat upper triangle."""
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (upper_triangle_size(p),):
        raise InvalidArgumentError(
            f"expected {upper_triangle_size(p)} entries for p={p}, got {vector.shape}"
        )
    rows, cols = triu_pairs(p)
    matrix = np.zeros((p, p))
    matrix[rows, cols] = vector
    matrix[cols, rows] = vector
    return matrix


def _pair(x1, x2) -> Tuple[np.ndarray, np.ndarray]:
    x1 = np.asarray(x1, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x1.shape != x2.shape:
        raise InvalidArgumentError(
            f"kernel arguments differ in length: {x1.shape[0]} vs {x2.shape[0]}"
        )
    return x1, x2


def eval_mean_kernel(x1, x2) -> np.ndarray:
    """
    Linear kernel h(x1, x2) = (x1 + x2) / 2.

    Example:
        >>> eval_mean_kernel([1.0], [3.0])
        array([2.])
    """
    x1, x2 = _pair(x1, x2)
    return (x1 + x2) / 2.0


def eval_cov_kernel(x1, x2) -> np.ndarray:
    """
    Quadratic kernel h(x1, x2) = (x1 - x2)(x1 - x2)^T / 2, flattened upper triangle.
    """
    x1, x2 = _pair(x1, x2)
    diff = x1 - x2
    rows, cols = triu_pairs(diff.shape[0])
    return diff[rows] * diff[cols] / 2.0


def eval_kendall_kernel(x1, x2) -> np.ndarray:
    """
    Concordance kernel 1{(x1_m - x2_m)(x1_k - x2_k) > 0}, flattened upper triangle.

    Ties give 0, so the (m, m) entry is 1 exactly when x1_m != x2_m.
    """
    x1, x2 = _pair(x1, x2)
    signs = np.sign(x1 - x2)
    rows, cols = triu_pairs(signs.shape[0])
    return (signs[rows] * signs[cols] > 0).astype(float)


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """
    An n x p sample of observations X_1, ..., X_n.

    Attributes:
        values: Read-only float64 array of shape (n, p)
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2:
            raise InvalidArgumentError("data must be a two-dimensional array")
        if values.shape[0] < 2:
            raise InvalidArgumentError(
                f"at least two observations are required, got n={values.shape[0]}"
            )
        if values.shape[1] < 1:
            raise InvalidArgumentError("observations must have at least one coordinate")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise InvalidArgumentError(
                f"non-finite entry at row {bad[0]}, column {bad[1]}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def select(self, idx: np.ndarray) -> "DataMatrix":
        """Return the rows given by ``idx`` (repetitions allowed)."""
        idx = np.asarray(idx)
        if idx.ndim != 1 or idx.dtype.kind not in "iu":
            raise InvalidArgumentError("row indices must be a one-dimensional integer array")
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise InvalidArgumentError(f"row index out of range [0, {self.n})")
        return DataMatrix(self.values[idx])

    def scaled(self, factor: float) -> "DataMatrix":
        return DataMatrix(self.values * factor)

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """
    A symmetric order-two kernel h: R^p x R^p -> R^d.

    Matrix-valued kernels store their output as the flat upper triangle of a
    p x p matrix, so d = p(p+1)/2 and :func:`flat_index` maps positions.

    Attributes:
        kind: Kernel family
        input_dim: Observation length p
        output_dim: Flattened output length d
        evaluator: Pairwise evaluator for custom kernels
        matrix_structured: Whether the output is a flat upper triangle
    """

    kind: KernelKind
    input_dim: int
    output_dim: int
    evaluator: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = field(
        default=None, repr=False
    )
    matrix_structured: bool = False

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise InvalidArgumentError("kernel dimensions must be positive")
        if self.matrix_structured and self.output_dim != upper_triangle_size(self.input_dim):
            raise InvalidArgumentError(
                "a matrix-structured kernel must have d = p(p+1)/2 outputs"
            )
        if self.kind == KernelKind.CUSTOM and self.evaluator is None:
            raise InvalidArgumentError("a custom kernel needs an evaluator")

    @classmethod
    def mean(cls, p: int) -> "KernelSpec":
        return cls(KernelKind.MEAN, p, p)

    @classmethod
    def covariance(cls, p: int) -> "KernelSpec":
        return cls(KernelKind.COVARIANCE, p, upper_triangle_size(p), matrix_structured=True)

    @classmethod
    def kendall(cls, p: int) -> "KernelSpec":
        return cls(KernelKind.KENDALL, p, upper_triangle_size(p), matrix_structured=True)

    @classmethod
    def custom(cls,
               evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray],
               input_dim: int,
               output_dim: int,
               matrix_structured: bool = False) -> "KernelSpec":
        """
        Wrap a user-supplied symmetric evaluator.

        The evaluator must accept two length-p vectors, return a length-d
        vector, be symmetric in its arguments and be defined at equal arguments.
        """
        return cls(KernelKind.CUSTOM, input_dim, output_dim, evaluator, matrix_structured)

    @classmethod
    def from_name(cls, name: str, p: int) -> "KernelSpec":
        """Build a built-in kernel from its CLI name (mean, cov, kendall)."""
        try:
            kind = KernelKind(name)
        except ValueError:
            raise InvalidArgumentError(f"unknown kernel '{name}'")
        builders = {
            KernelKind.MEAN: cls.mean,
            KernelKind.COVARIANCE: cls.covariance,
            KernelKind.KENDALL: cls.kendall,
        }
        if kind not in builders:
            raise InvalidArgumentError("custom kernels cannot be built from a name")
        return builders[kind](p)

    @property
    def name(self) -> str:
        return self.kind.value

    def check_data(self, data: DataMatrix) -> None:
        if data.p != self.input_dim:
            raise InvalidArgumentError(
                f"kernel expects p={self.input_dim} coordinates, data has p={data.p}"
            )

    def evaluate(self, x1, x2) -> np.ndarray:
        """Evaluate h(x1, x2) for a single pair."""
        if self.kind == KernelKind.MEAN:
            out = eval_mean_kernel(x1, x2)
        elif self.kind == KernelKind.COVARIANCE:
            out = eval_cov_kernel(x1, x2)
        elif self.kind == KernelKind.KENDALL:
            out = eval_kendall_kernel(x1, x2)
        else:
            x1, x2 = _pair(x1, x2)
            out = np.asarray(self.evaluator(x1, x2), dtype=float).ravel()
        if out.shape != (self.output_dim,):
            raise InvalidArgumentError(
                f"kernel returned {out.shape[0]} values, expected {self.output_dim}"
            )
        return out

    def evaluate_against(self, x: np.ndarray, others: np.ndarray) -> np.ndarray:
        """
        Evaluate h(x, Y_j) for every row Y_j of ``others``.

        Args:
            x: Length-p vector
            others: Array of shape (m, p)

        Returns:
            Array of shape (m, d)
        """
        x = np.asarray(x, dtype=float)
        others = np.asarray(others, dtype=float)
        if self.kind == KernelKind.MEAN:
            return (x + others) / 2.0
        if self.kind in (KernelKind.COVARIANCE, KernelKind.KENDALL):
            rows, cols = triu_pairs(self.input_dim)
            if self.kind == KernelKind.COVARIANCE:
                diff = x - others
                return diff[:, rows] * diff[:, cols] / 2.0
            signs = np.sign(x - others)
            return (signs[:, rows] * signs[:, cols] > 0).astype(float)
        return np.vstack([self.evaluate(x, y) for y in others])

    def diagonal(self, values: np.ndarray) -> np.ndarray:
        """Evaluate h(X_i, X_i) for every row; returns shape (n, d)."""
        values = np.asarray(values, dtype=float)
        if self.kind == KernelKind.MEAN:
            return values.copy()
        if self.kind in (KernelKind.COVARIANCE, KernelKind.KENDALL):
            return np.zeros((values.shape[0], self.output_dim))
        return np.vstack([self.evaluate(x, x) for x in values])

    def off_diagonal_mask(self) -> np.ndarray:
        """Boolean d-vector selecting flat entries with m != k."""
        if not self.matrix_structured:
            raise InvalidArgumentError(
                f"kernel '{self.name}' has no matrix structure; off-diagonal masks need one"
            )
        rows, cols = triu_pairs(self.input_dim)
        return rows != cols

    def to_matrix(self, vector: np.ndarray) -> np.ndarray:
        """Reconstruct the p x p view of a flattened matrix-valued output."""
        if not self.matrix_structured:
            raise InvalidArgumentError(f"kernel '{self.name}' has no matrix structure")
        return unvech(vector, self.input_dim)
