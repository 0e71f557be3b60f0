"""
U-statistics, V-statistics, Hajek projection tables and covariance estimators.

Built-in kernels have closed-form fast paths; every other kernel goes through
the generic pairwise accumulation, which costs O(n^2 d).
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .config import EngineSettings
from .exceptions import InvalidArgumentError, ResourceLimitError
from .kernels import DataMatrix, KernelKind, KernelSpec, triu_pairs

logger = logging.getLogger(__name__)

# Closed-form or vectorised paths that have a brute-force counterpart in the
# test oracles. Keep in sync with oracles.ORACLE_REGISTRY.
FAST_PATHS = (
    "ustat/mean",
    "ustat/cov",
    "ustat/kendall",
    "hajek/mean",
    "hajek/cov",
    "hajek/kendall",
    "multiplier_cov",
    "eb_cov",
)

# Upper bound on the number of floats held by one block of sign differences.
_BLOCK_FLOATS = 4_000_000


class CovKind(str, Enum):
    EB = "eb"
    JACKKNIFE = "jackknife"
    MULTIPLIER = "multiplier"


@dataclass(frozen=True, eq=False)
class UStatSummary:
    """
    U- and V-statistic of a sample.

    Attributes:
        u: d-vector U_n, the average of h over ordered pairs i != j
        v: d-vector V_n, the average of h over all ordered pairs
        n: Sample size
        kernel: Kernel the statistics were computed with
    """

    u: np.ndarray
    v: np.ndarray
    n: int
    kernel: KernelSpec


@dataclass(frozen=True, eq=False)
class HajekTable:
    """
    Per-observation Hajek projection estimates.

    Attributes:
        ghat: Array (n, d); row i is (n-1)^{-1} sum_{j != i} h(X_i, X_j) - U_n
        u: d-vector U_n
    """

    ghat: np.ndarray
    u: np.ndarray

    @property
    def n(self) -> int:
        return self.ghat.shape[0]

    @property
    def d(self) -> int:
        return self.ghat.shape[1]


@dataclass(frozen=True, eq=False)
class CovEstimate:
    """
    A covariance estimate of the Hajek projection.

    Attributes:
        matrix: d x d symmetric matrix, or the d-vector of its diagonal when
            ``diagonal_only`` is set
        kind: Which estimator produced it
        diagonal_only: Whether only the diagonal was computed
    """

    matrix: np.ndarray
    kind: CovKind
    diagonal_only: bool = False

    def diagonal(self) -> np.ndarray:
        return self.matrix if self.diagonal_only else np.diag(self.matrix).copy()


def sample_covariance(values: np.ndarray) -> np.ndarray:
    """Unbiased sample covariance (n-1 denominator) of the rows of ``values``."""
    values = np.asarray(values, dtype=float)
    centered = values - values.mean(axis=0)
    return centered.T @ centered / (values.shape[0] - 1)


class UStatCalculator:
    """
    Computes U-statistics of order two and the quantities built on them.

    The generic path evaluates the kernel over all pairs; covariance and mean
    kernels use moment identities in O(n p^2) and O(n p), and the Kendall
    kernel counts concordances block by block.
    """

    def __init__(self, settings: Optional[EngineSettings] = None):
        """
        Initialize the UStatCalculator.

        Args:
            settings: Engine settings; defaults to ``EngineSettings()``
        """
        self.settings = settings or EngineSettings()

    def compute_ustat(self,
                      data: DataMatrix,
                      kernel: KernelSpec,
                      generic: bool = False) -> UStatSummary:
        """
        Compute U_n and V_n.

        Args:
            data: Sample of n >= 2 observations
            kernel: Kernel with input_dim == data.p
            generic: Force the pairwise path even when a fast path exists

        Returns:
            UStatSummary with V_n = ((n-1) U_n + mean_i h(X_i, X_i)) / n

        Example:
            >>> calc = UStatCalculator()
            >>> calc.compute_ustat(DataMatrix([[0.0], [2.0]]), KernelSpec.covariance(1)).u
            array([2.])
        """
        kernel.check_data(data)
        n = data.n
        x = data.values
        if not generic and kernel.kind == KernelKind.MEAN:
            u = x.mean(axis=0)
        elif not generic and kernel.kind == KernelKind.COVARIANCE:
            rows, cols = triu_pairs(data.p)
            u = sample_covariance(x)[rows, cols]
        else:
            row_sums = self._pair_row_sums(data, kernel, generic)
            u = _column_sum(row_sums) / (n * (n - 1))
        diag_mean = kernel.diagonal(x).mean(axis=0)
        v = ((n - 1) * u + diag_mean) / n
        return UStatSummary(u=u, v=v, n=n, kernel=kernel)

    def compute_hajek(self,
                      data: DataMatrix,
                      kernel: KernelSpec,
                      generic: bool = False) -> HajekTable:
        """
        Estimate the Hajek projection at every observation.

        Args:
            data: Sample with n >= 3
            kernel: Kernel matching the data
            generic: Force the pairwise path

        Returns:
            HajekTable whose ghat columns sum to zero
        """
        if data.n < 3:
            raise InvalidArgumentError(
                f"the Hajek table needs n >= 3 observations, got n={data.n}"
            )
        ghat, u = self._hajek_terms(data, kernel, generic)
        return HajekTable(ghat=ghat, u=u)

    def multiplier_cov(self, hajek: HajekTable, diagonal_only: bool = False) -> CovEstimate:
        """
        Conditional covariance of the multiplier bootstrap, n^{-1} sum_i g_i g_i^T.

        Args:
            hajek: Hajek table
            diagonal_only: Return only the d diagonal entries

        Returns:
            CovEstimate of kind MULTIPLIER
        """
        ghat = hajek.ghat
        if diagonal_only:
            return CovEstimate(np.mean(ghat ** 2, axis=0), CovKind.MULTIPLIER, True)
        self._check_d_limit(hajek.d)
        return CovEstimate(ghat.T @ ghat / hajek.n, CovKind.MULTIPLIER)

    def jackknife_cov(self, hajek: HajekTable, diagonal_only: bool = False) -> CovEstimate:
        """
        Jackknife covariance estimator of T_n, (n-1)/(n-2)^2 sum_i g_i g_i^T.
        """
        n = hajek.n
        scale = (n - 1) / (n - 2) ** 2
        ghat = hajek.ghat
        if diagonal_only:
            return CovEstimate(scale * np.sum(ghat ** 2, axis=0), CovKind.JACKKNIFE, True)
        self._check_d_limit(hajek.d)
        return CovEstimate(scale * (ghat.T @ ghat), CovKind.JACKKNIFE)

    def eb_cov(self,
               data: DataMatrix,
               kernel: KernelSpec,
               diagonal_only: bool = False,
               generic: bool = False) -> CovEstimate:
        """
        Conditional covariance of the empirical-bootstrap projection.

        G_i = n^{-1} sum_j h(X_i, X_j) with the j = i term included, and the
        estimate is n^{-1} sum_i G_i G_i^T - V_n V_n^T, computed from the
        centered G_i.

        Args:
            data: Sample with n >= 2
            kernel: Kernel matching the data
            diagonal_only: Return only the diagonal
            generic: Force the pairwise path

        Returns:
            CovEstimate of kind EB
        """
        kernel.check_data(data)
        if not diagonal_only:
            self._check_d_limit(kernel.output_dim)
        n = data.n
        ghat, u = self._hajek_terms(data, kernel, generic)
        row_sums = (n - 1) * (ghat + u)
        g_full = (row_sums + kernel.diagonal(data.values)) / n
        centered = g_full - g_full.mean(axis=0)
        if diagonal_only:
            return CovEstimate(np.mean(centered ** 2, axis=0), CovKind.EB, True)
        return CovEstimate(centered.T @ centered / n, CovKind.EB)

    def split_sum(self, data: DataMatrix, kernel: KernelSpec) -> np.ndarray:
        """
        Split-sample estimator m^{-1} sum_{i<m} h(X_i, X_{i+m}) with m = floor(n/2).

        The summands are iid, which makes this an independent check on the
        U-statistic's target. With odd n the last row is unused.
        """
        kernel.check_data(data)
        m = data.n // 2
        first = data.values[:m]
        second = data.values[m:2 * m]
        if kernel.kind == KernelKind.CUSTOM:
            values = np.vstack([kernel.evaluate(a, b) for a, b in zip(first, second)])
        elif kernel.kind == KernelKind.MEAN:
            values = (first + second) / 2.0
        else:
            rows, cols = triu_pairs(data.p)
            diff = first - second
            if kernel.kind == KernelKind.COVARIANCE:
                values = diff[:, rows] * diff[:, cols] / 2.0
            else:
                signs = np.sign(diff)
                values = (signs[:, rows] * signs[:, cols] > 0).astype(float)
        return values.mean(axis=0)

    def _check_d_limit(self, d: int) -> None:
        if d > self.settings.d_limit:
            raise ResourceLimitError(
                f"refusing to materialise a {d}x{d} matrix (d_limit={self.settings.d_limit}); "
                "request the diagonal only or raise d_limit"
            )

    def _hajek_terms(self,
                     data: DataMatrix,
                     kernel: KernelSpec,
                     generic: bool) -> Tuple[np.ndarray, np.ndarray]:
        kernel.check_data(data)
        n = data.n
        x = data.values
        if not generic and kernel.kind == KernelKind.MEAN:
            mean = x.mean(axis=0)
            return (n - 2) * (x - mean) / (2.0 * (n - 1)), mean
        if not generic and kernel.kind == KernelKind.COVARIANCE:
            rows, cols = triu_pairs(data.p)
            centered = x - x.mean(axis=0)
            second = centered.T @ centered
            outer = centered[:, rows] * centered[:, cols]
            ghat = (n * outer - second[rows, cols]) / (2.0 * (n - 1))
            return ghat, second[rows, cols] / (n - 1)
        row_sums = self._pair_row_sums(data, kernel, generic)
        u = _column_sum(row_sums) / (n * (n - 1))
        return row_sums / (n - 1) - u, u

    def _pair_row_sums(self,
                       data: DataMatrix,
                       kernel: KernelSpec,
                       generic: bool) -> np.ndarray:
        """Row i holds sum_{j != i} h(X_i, X_j)."""
        if not generic and kernel.kind == KernelKind.KENDALL:
            logger.debug("Kendall concordance counts for n=%d, p=%d", data.n, data.p)
            return _kendall_row_sums(data.values)
        logger.debug("generic pairwise accumulation for n=%d, d=%d", data.n, kernel.output_dim)
        x = data.values
        out = np.empty((data.n, kernel.output_dim))
        for i in range(data.n):
            values = kernel.evaluate_against(x[i], x)
            values[i] = 0.0
            out[i] = _column_sum(values)
        return out


def _column_sum(values: np.ndarray) -> np.ndarray:
    # Contiguous rows let numpy use pairwise summation.
    return np.ascontiguousarray(values.T).sum(axis=1)


def _kendall_row_sums(x: np.ndarray) -> np.ndarray:
    """
    Concordance counts sum_{j != i} 1{s_m s_k > 0} with s = sign(X_i - X_j).

    Uses 1{s_m s_k > 0} = (s_m s_k + |s_m| |s_k|) / 2 for s in {-1, 0, 1}, so
    a block of rows reduces to two batched matrix products. All values are
    integers, hence exact.
    """
    n, p = x.shape
    rows, cols = triu_pairs(p)
    block = max(1, _BLOCK_FLOATS // (n * p))
    out = np.empty((n, rows.shape[0]))
    for start in range(0, n, block):
        stop = min(n, start + block)
        signs = np.sign(x[start:stop, None, :] - x[None, :, :])
        magnitude = np.abs(signs)
        concordant = (np.matmul(signs.transpose(0, 2, 1), signs)
                      + np.matmul(magnitude.transpose(0, 2, 1), magnitude))
        out[start:stop] = concordant[:, rows, cols] / 2.0
    return out
