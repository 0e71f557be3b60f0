"""
Brute-force reference implementations used by the test suite.

Every function here evaluates its quantity by the most literal loop over
pairs, triples or resample tuples. They are slow on purpose and guarded by
size limits; they are not part of the installed package.
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from ustatboot.bootstrap import StatFunctional
from ustatboot.exceptions import ResourceLimitError
from ustatboot.kernels import DataMatrix, KernelSpec

ORACLE_N_LIMIT = 200
ENUMERATION_LIMIT = 10 ** 6
ENUMERATION_DEFAULT_MAX_N = 5
TRIPLE_SUM_N_LIMIT = 60
TRIPLE_SUM_D_LIMIT = 64


@dataclass
class OracleReport:
    name: str
    max_abs_error: float
    tolerance: float
    passed: bool
    details: Dict[int, float] = field(default_factory=dict)


@dataclass
class EnumeratedLaw:
    """
    Exact discrete conditional law of a bootstrap statistic.

    Attributes:
        support: Sorted distinct values
        probabilities: Probability of each support point
        mean: Mean of the unreduced replicate vectors over all tuples
    """

    support: np.ndarray
    probabilities: np.ndarray
    mean: np.ndarray

    def cdf(self, t: np.ndarray) -> np.ndarray:
        cumulative = np.cumsum(self.probabilities)
        index = np.searchsorted(self.support, t, side="right")
        return np.where(index > 0, cumulative[np.maximum(index - 1, 0)], 0.0)


def compare(name: str, fast, oracle, tolerance: float) -> OracleReport:
    """Entrywise comparison of a fast-path result with its oracle."""
    fast = np.asarray(fast, dtype=float).ravel()
    oracle = np.asarray(oracle, dtype=float).ravel()
    errors = np.abs(fast - oracle)
    details = {int(i): float(errors[i]) for i in np.flatnonzero(errors > tolerance)}
    max_error = float(errors.max()) if errors.size else 0.0
    return OracleReport(name, max_error, tolerance, max_error <= tolerance, details)


def _guard(condition: bool, message: str) -> None:
    if not condition:
        raise ResourceLimitError(message)


def _literal_ustat(rows: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    n = rows.shape[0]
    total = np.zeros(kernel.output_dim)
    for i in range(n):
        for j in range(n):
            if i != j:
                total = total + kernel.evaluate(rows[i], rows[j])
    return total / (n * (n - 1))


def _literal_vstat(rows: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    n = rows.shape[0]
    total = np.zeros(kernel.output_dim)
    for i in range(n):
        for j in range(n):
            total = total + kernel.evaluate(rows[i], rows[j])
    return total / n ** 2


def oracle_ustat(data: DataMatrix, kernel: KernelSpec) -> np.ndarray:
    """U_n by the ordered-pair double loop."""
    _guard(data.n <= ORACLE_N_LIMIT, f"oracle_ustat allows n <= {ORACLE_N_LIMIT}")
    return _literal_ustat(data.values, kernel)


def oracle_vstat(data: DataMatrix, kernel: KernelSpec) -> np.ndarray:
    _guard(data.n <= ORACLE_N_LIMIT, f"oracle_vstat allows n <= {ORACLE_N_LIMIT}")
    return _literal_vstat(data.values, kernel)


def oracle_hajek(data: DataMatrix, kernel: KernelSpec) -> np.ndarray:
    """Row i is (n-1)^{-1} sum_{j != i} h(X_i, X_j) - U_n, by explicit loops."""
    _guard(data.n <= ORACLE_N_LIMIT, f"oracle_hajek allows n <= {ORACLE_N_LIMIT}")
    x = data.values
    n = data.n
    u = _literal_ustat(x, kernel)
    out = np.zeros((n, kernel.output_dim))
    for i in range(n):
        for j in range(n):
            if j != i:
                out[i] += kernel.evaluate(x[i], x[j])
    return out / (n - 1) - u


def oracle_jackknife_triple_sum(data: DataMatrix, kernel: KernelSpec) -> np.ndarray:
    """
    Jackknife covariance as the literal triple sum
    ((n-1)(n-2)^2)^{-1} sum_i sum_{j != i} sum_{k != i} (h_ij - U)(h_ik - U)^T.
    """
    _guard(data.n <= TRIPLE_SUM_N_LIMIT, f"triple sums allow n <= {TRIPLE_SUM_N_LIMIT}")
    _guard(kernel.output_dim <= TRIPLE_SUM_D_LIMIT, f"triple sums allow d <= {TRIPLE_SUM_D_LIMIT}")
    x = data.values
    n = data.n
    u = _literal_ustat(x, kernel)
    d = kernel.output_dim
    total = np.zeros((d, d))
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            left = kernel.evaluate(x[i], x[j]) - u
            for k in range(n):
                if k != i:
                    total += np.outer(left, kernel.evaluate(x[i], x[k]) - u)
    return total / ((n - 1) * (n - 2) ** 2)


def oracle_multiplier_cov(data: DataMatrix, kernel: KernelSpec) -> np.ndarray:
    """n^{-1} sum_i g_i g_i^T recovered from the jackknife triple sum."""
    n = data.n
    return oracle_jackknife_triple_sum(data, kernel) * (n - 2) ** 2 / (n * (n - 1))


def oracle_eb_cov(data: DataMatrix, kernel: KernelSpec) -> np.ndarray:
    """n^{-1} sum_i G_i G_i^T - V_n V_n^T with G_i = n^{-1} sum_j h(X_i, X_j), j = i included."""
    _guard(data.n <= TRIPLE_SUM_N_LIMIT, f"oracle_eb_cov allows n <= {TRIPLE_SUM_N_LIMIT}")
    x = data.values
    n = data.n
    g = np.zeros((n, kernel.output_dim))
    for i in range(n):
        for j in range(n):
            g[i] += kernel.evaluate(x[i], x[j])
    g /= n
    v = _literal_vstat(x, kernel)
    return sum(np.outer(row, row) for row in g) / n - np.outer(v, v)


def oracle_empirical_draw(data: DataMatrix, kernel: KernelSpec, idx) -> np.ndarray:
    """sqrt(n) (U*_n - V_n) / 2 with U*_n looped over the resampled rows."""
    _guard(data.n <= ORACLE_N_LIMIT, f"oracle_empirical_draw allows n <= {ORACLE_N_LIMIT}")
    resample = data.values[np.asarray(idx)]
    return math.sqrt(data.n) * (_literal_ustat(resample, kernel)
                                - _literal_vstat(data.values, kernel)) / 2.0


def oracle_reweighted_draw(data: DataMatrix, kernel: KernelSpec, w, flat: bool = False) -> np.ndarray:
    """The reweighted replicate from the weighted double sum over i != j."""
    _guard(data.n <= ORACLE_N_LIMIT, f"oracle_reweighted_draw allows n <= {ORACLE_N_LIMIT}")
    x = data.values
    n = data.n
    w = np.asarray(w, dtype=float)
    total = np.zeros(kernel.output_dim)
    for i in range(n):
        for j in range(n):
            if i != j:
                total = total + w[i] * w[j] * kernel.evaluate(x[i], x[j])
    u = _literal_ustat(x, kernel)
    stat = math.sqrt(n) * (total / (n * (n - 1)) - u) / 2.0
    if flat:
        stat = stat - math.sqrt(n) * (w.mean() - 1.0) * u
    return stat


def oracle_split_sum(data: DataMatrix, kernel: KernelSpec) -> np.ndarray:
    """m^{-1} sum_{i<m} h(X_i, X_{i+m}) with m = floor(n/2)."""
    m = data.n // 2
    x = data.values
    return sum(kernel.evaluate(x[i], x[i + m]) for i in range(m)) / m


def oracle_eb_enumeration(data: DataMatrix,
                          kernel: KernelSpec,
                          functional: StatFunctional,
                          max_n: int = ENUMERATION_DEFAULT_MAX_N) -> EnumeratedLaw:
    """
    Exact empirical-bootstrap law by enumerating all n^n index tuples.

    Args:
        data: Sample with n <= max_n
        kernel: Kernel
        functional: Reduction of the replicate vectors
        max_n: Largest n accepted; n^n must also stay below 10^6

    Returns:
        EnumeratedLaw of the reduced statistic
    """
    n = data.n
    _guard(n <= max_n and n ** n <= ENUMERATION_LIMIT,
           f"enumeration needs n <= {max_n} and n^n <= {ENUMERATION_LIMIT}")
    mask = functional.validate(kernel)
    vectors = np.vstack([oracle_empirical_draw(data, kernel, idx)
                         for idx in itertools.product(range(n), repeat=n)])
    reduced = functional.reduce(vectors, n, mask)
    support, counts = np.unique(reduced, return_counts=True)
    return EnumeratedLaw(support=support, probabilities=counts / reduced.size,
                         mean=vectors.mean(axis=0))


def cdf_distance(law: EnumeratedLaw, draws) -> float:
    """sup_t |F_law(t) - F_draws(t)| over the pooled support."""
    draws = np.sort(np.asarray(draws, dtype=float))
    points = np.concatenate([law.support, draws])
    empirical = np.searchsorted(draws, points, side="right") / draws.size
    return float(np.max(np.abs(law.cdf(points) - empirical)))


# Fast paths of ustat.FAST_PATHS and bootstrap.FAST_PATHS with their oracles.
ORACLE_REGISTRY: Dict[str, Callable] = {
    "ustat/mean": oracle_ustat,
    "ustat/cov": oracle_ustat,
    "ustat/kendall": oracle_ustat,
    "hajek/mean": oracle_hajek,
    "hajek/cov": oracle_hajek,
    "hajek/kendall": oracle_hajek,
    "multiplier_cov": oracle_multiplier_cov,
    "eb_cov": oracle_eb_cov,
    "empirical/cov": oracle_empirical_draw,
    "empirical/mean": oracle_empirical_draw,
    "reweighted/cov": oracle_reweighted_draw,
    "reweighted/mean": oracle_reweighted_draw,
}


def missing_oracles(fast_paths: List[str]) -> List[str]:
    return [name for name in fast_paths if name not in ORACLE_REGISTRY]
