"""
Bootstrap approximations for the maxima of high-dimensional U-statistics.

Three resampling schemes are provided: the empirical bootstrap (rows drawn
with replacement, centered at the V-statistic), the randomly reweighted
bootstrap with iid N(1,1) weights and its centering-corrected "flat" variant,
and the jackknife Gaussian multiplier bootstrap built on the Hajek table.
Each replicate is reduced to a scalar functional and conditional quantiles
are read off the sorted draws.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .config import EngineSettings
from .exceptions import CostWarning, InvalidArgumentError
from .kernels import DataMatrix, KernelKind, KernelSpec, triu_pairs
from .random_streams import ReplicateStreams
from .ustat import HajekTable, UStatCalculator, UStatSummary

logger = logging.getLogger(__name__)

# Vectorised draw paths checked against brute-force oracles.
FAST_PATHS = (
    "empirical/cov",
    "empirical/mean",
    "reweighted/cov",
    "reweighted/mean",
)


class BootstrapMethod(str, Enum):
    EMPIRICAL = "eb"
    REWEIGHTED = "rw"
    REWEIGHTED_FLAT = "rwflat"
    MULTIPLIER = "mult"


class StatKind(str, Enum):
    MAX = "max"
    ABS_MAX = "absmax"
    OFF_DIAG_ABS_MAX = "offabsmax"
    RECTANGLE = "rectangle"


class StatScale(str, Enum):
    RAW = "raw"
    RESCALED = "rescaled"


@dataclass(frozen=True, eq=False)
class StatFunctional:
    """
    Scalar reduction applied to every bootstrap replicate.

    RESCALED multiplies the replicate by 2/sqrt(n) first, which puts it on the
    scale of |U_n - theta|. Rectangle reductions return 1.0 when every entry
    lies in [lo, hi] and 0.0 otherwise.

    Attributes:
        kind: Reduction type
        scale: RAW or RESCALED
        lo: Lower rectangle corner (RECTANGLE only)
        hi: Upper rectangle corner (RECTANGLE only)
    """

    kind: StatKind
    scale: StatScale = StatScale.RAW
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    @classmethod
    def max(cls, scale: StatScale = StatScale.RAW) -> "StatFunctional":
        return cls(StatKind.MAX, scale)

    @classmethod
    def abs_max(cls, scale: StatScale = StatScale.RAW) -> "StatFunctional":
        return cls(StatKind.ABS_MAX, scale)

    @classmethod
    def off_diag_abs_max(cls, scale: StatScale = StatScale.RAW) -> "StatFunctional":
        return cls(StatKind.OFF_DIAG_ABS_MAX, scale)

    @classmethod
    def rectangle(cls, lo, hi) -> "StatFunctional":
        lo = np.asarray(lo, dtype=float).ravel()
        hi = np.asarray(hi, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise InvalidArgumentError("rectangle corners differ in length")
        if np.any(lo > hi):
            bad = int(np.argmax(lo > hi))
            raise InvalidArgumentError(f"rectangle has lo > hi in coordinate {bad}")
        return cls(StatKind.RECTANGLE, StatScale.RAW, lo, hi)

    def validate(self, kernel: KernelSpec) -> Optional[np.ndarray]:
        """
        Check the functional against a kernel.

        Returns:
            The off-diagonal mask for OFF_DIAG_ABS_MAX, else None
        """
        if self.kind == StatKind.RECTANGLE:
            if self.scale == StatScale.RESCALED:
                raise InvalidArgumentError("rectangle functionals take raw replicates only")
            if self.lo is None or self.hi is None:
                raise InvalidArgumentError("rectangle functional needs both corners")
            if self.lo.shape != (kernel.output_dim,):
                raise InvalidArgumentError(
                    f"rectangle has {self.lo.shape[0]} coordinates, kernel has d={kernel.output_dim}"
                )
            return None
        if self.kind == StatKind.OFF_DIAG_ABS_MAX:
            mask = kernel.off_diagonal_mask()
            if not mask.any():
                raise InvalidArgumentError("p=1 leaves no off-diagonal entries")
            return mask
        return None

    def reduce(self, replicates: np.ndarray, n: int, mask: Optional[np.ndarray] = None) -> np.ndarray:
        """
        Reduce a (B, d) block of replicate vectors to B scalars.

        Args:
            replicates: Replicate statistics, one row per replicate
            n: Sample size, used by the RESCALED scale
            mask: Off-diagonal mask from :meth:`validate`

        Returns:
            Array of length B
        """
        if self.scale == StatScale.RESCALED:
            replicates = replicates * (2.0 / math.sqrt(n))
        if self.kind == StatKind.MAX:
            return replicates.max(axis=1)
        if self.kind == StatKind.ABS_MAX:
            return np.abs(replicates).max(axis=1)
        if self.kind == StatKind.OFF_DIAG_ABS_MAX:
            return np.abs(replicates[:, mask]).max(axis=1)
        inside = (replicates >= self.lo) & (replicates <= self.hi)
        return inside.all(axis=1).astype(float)

    @property
    def label(self) -> str:
        return f"{self.kind.value}/{self.scale.value}"


@dataclass(frozen=True, eq=False)
class BootstrapDraws:
    """
    Replicate values of a scalar functional.

    Attributes:
        values: Length-B array of reduced replicate statistics
        method: Bootstrap scheme
        functional: Reduction applied to each replicate
        seed: Master seed of the replicate streams
        B: Number of replicates
    """

    values: np.ndarray
    method: BootstrapMethod
    functional: StatFunctional
    seed: int
    B: int

    def summary(self) -> Dict[str, float]:
        """Count, mean, std, min, quartiles and max of the draws."""
        return {key: float(val) for key, val in pd.Series(self.values).describe().items()}


@dataclass(frozen=True)
class QuantileEstimate:
    """
    Inf-form empirical quantile inf{t : P(draw <= t) >= level}.

    Attributes:
        level: Quantile level in (0, 1)
        value: Attained draw value
        B: Number of draws
        method: Bootstrap scheme of the draws
    """

    level: float
    value: float
    B: int
    method: BootstrapMethod


@dataclass(frozen=True, eq=False)
class _Context:
    data: DataMatrix
    kernel: KernelSpec
    method: BootstrapMethod
    streams: ReplicateStreams
    summary: Optional[UStatSummary]
    hajek: Optional[HajekTable]
    centered: Optional[np.ndarray]


class BootstrapEngine:
    """
    Generates bootstrap replicates and their conditional quantiles.

    Replicates are processed in fixed blocks of ``settings.block_size``; the
    blocks are spread over ``settings.threads`` joblib workers and then
    concatenated in replicate order, so the draws are identical for every
    worker count.
    """

    def __init__(self, settings: Optional[EngineSettings] = None):
        """
        Initialize the BootstrapEngine.

        Args:
            settings: Engine settings; defaults to ``EngineSettings()``
        """
        self.settings = settings or EngineSettings()
        self.calculator = UStatCalculator(self.settings)

    def multiplier_draw(self, hajek: HajekTable, e: np.ndarray) -> np.ndarray:
        """
        One jackknife Gaussian multiplier replicate n^{-1/2} sum_i g_i e_i.

        Args:
            hajek: Hajek table of the sample
            e: Length-n multiplier vector

        Returns:
            d-vector, linear in ``e``
        """
        e = np.asarray(e, dtype=float)
        if e.shape != (hajek.n,):
            raise InvalidArgumentError(f"multipliers must have length n={hajek.n}")
        return e @ hajek.ghat / math.sqrt(hajek.n)

    def empirical_draw(self,
                       summary: UStatSummary,
                       data: DataMatrix,
                       kernel: KernelSpec,
                       idx: np.ndarray) -> np.ndarray:
        """
        One empirical-bootstrap replicate sqrt(n) (U*_n - V_n) / 2.

        Args:
            summary: U/V statistics of the original sample
            data: Original sample
            kernel: Kernel
            idx: Length-n row indices of the resample (repeats allowed)

        Returns:
            d-vector
        """
        idx = np.asarray(idx)
        if idx.shape != (data.n,):
            raise InvalidArgumentError(f"resample indices must have length n={data.n}")
        resample = data.select(idx)
        u_star = self.calculator.compute_ustat(resample, kernel).u
        return math.sqrt(data.n) * (u_star - summary.v) / 2.0

    def reweighted_draw(self,
                        summary: UStatSummary,
                        data: DataMatrix,
                        kernel: KernelSpec,
                        w: np.ndarray,
                        flat: bool = False) -> np.ndarray:
        """
        One randomly reweighted replicate.

        Returns sqrt(n)(U_n^w - U_n)/2 where U_n^w weights pair (i, j) by
        w_i w_j; with ``flat`` the correction -sqrt(n)(mean(w) - 1) U_n is
        applied.

        Args:
            summary: U/V statistics of the original sample
            data: Original sample
            kernel: Kernel
            w: Length-n weights
            flat: Apply the centering correction

        Returns:
            d-vector
        """
        w = np.asarray(w, dtype=float)
        if w.shape != (data.n,):
            raise InvalidArgumentError(f"weights must have length n={data.n}")
        kernel.check_data(data)
        centered = data.values - data.values.mean(axis=0)
        weighted = self._reweighted_ustat(data, kernel, w[None, :], centered)
        return self._reweighted_stat(summary, w[None, :], weighted, flat)[0]

    def run_bootstrap(self,
                      data: DataMatrix,
                      kernel: KernelSpec,
                      method: BootstrapMethod,
                      functional: StatFunctional,
                      B: Optional[int] = None,
                      seed: int = 0,
                      hajek: Optional[HajekTable] = None) -> BootstrapDraws:
        """
        Draw B replicates and reduce each to a scalar.

        Args:
            data: Sample
            kernel: Kernel
            method: Bootstrap scheme
            functional: Scalar reduction
            B: Replicate count; defaults to ``settings.default_B``
            seed: Master seed
            hajek: Precomputed Hajek table for the multiplier scheme

        Returns:
            BootstrapDraws of length B

        Example:
            >>> engine = BootstrapEngine()
            >>> draws = engine.run_bootstrap(data, KernelSpec.covariance(data.p),
            ...                              BootstrapMethod.MULTIPLIER,
            ...                              StatFunctional.abs_max(StatScale.RESCALED),
            ...                              B=1000, seed=7)
        """
        B = self.settings.default_B if B is None else int(B)
        if B < 1:
            raise InvalidArgumentError("B must be at least 1")
        mask = functional.validate(kernel)
        context = self._context(data, kernel, method, seed, hajek, B)
        blocks = self._blocks(B)
        logger.info("bootstrap %s: B=%d, n=%d, d=%d, %s, %d block(s) on %d worker(s)",
                    method.value, B, data.n, kernel.output_dim, functional.label,
                    len(blocks), self.settings.threads)

        def reduce_block(block: range) -> np.ndarray:
            return functional.reduce(self._replicate_block(context, block), data.n, mask)

        values = np.concatenate(self._map_blocks(reduce_block, blocks))
        return BootstrapDraws(values=values, method=method, functional=functional,
                              seed=int(seed), B=B)

    def raw_replicates(self,
                       data: DataMatrix,
                       kernel: KernelSpec,
                       method: BootstrapMethod,
                       B: Optional[int] = None,
                       seed: int = 0) -> np.ndarray:
        """
        Unreduced replicate vectors, shape (B, d), from the same streams as
        :meth:`run_bootstrap`.
        """
        B = self.settings.default_B if B is None else int(B)
        if B < 1:
            raise InvalidArgumentError("B must be at least 1")
        context = self._context(data, kernel, method, seed, None, B)
        return np.vstack(self._map_blocks(lambda block: self._replicate_block(context, block),
                                          self._blocks(B)))

    def quantile(self, draws: BootstrapDraws, alpha: float) -> QuantileEstimate:
        """
        The ceil(alpha * B)-th order statistic of the draws.

        Args:
            draws: Bootstrap draws
            alpha: Level in (0, 1)

        Returns:
            QuantileEstimate whose value is one of the draws
        """
        if not 0.0 < alpha < 1.0:
            raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
        if draws.values.size == 0:
            raise InvalidArgumentError("no draws to take a quantile of")
        ordered = np.sort(draws.values)
        # Rounding guards against alpha * B landing a hair above an integer.
        rank = max(1, math.ceil(round(alpha * ordered.size, 9)))
        return QuantileEstimate(level=float(alpha), value=float(ordered[rank - 1]),
                                B=draws.B, method=draws.method)

    def quantiles(self, draws: BootstrapDraws, alphas: Sequence[float]) -> List[QuantileEstimate]:
        return [self.quantile(draws, alpha) for alpha in alphas]

    def rectangle_probability(self, draws: BootstrapDraws) -> float:
        """Fraction of replicates that fell inside the rectangle."""
        if draws.functional.kind != StatKind.RECTANGLE:
            raise InvalidArgumentError("rectangle probabilities need rectangle draws")
        return float(np.mean(draws.values))

    def _context(self,
                 data: DataMatrix,
                 kernel: KernelSpec,
                 method: BootstrapMethod,
                 seed: int,
                 hajek: Optional[HajekTable],
                 B: int) -> _Context:
        kernel.check_data(data)
        streams = ReplicateStreams(seed)
        if method == BootstrapMethod.MULTIPLIER:
            if hajek is None:
                hajek = self.calculator.compute_hajek(data, kernel)
            elif hajek.n != data.n or hajek.d != kernel.output_dim:
                raise InvalidArgumentError("Hajek table does not match data and kernel")
            return _Context(data, kernel, method, streams, None, hajek, None)
        self._warn_on_cost(data, kernel, B)
        summary = self.calculator.compute_ustat(data, kernel)
        centered = data.values - data.values.mean(axis=0)
        return _Context(data, kernel, method, streams, summary, None, centered)

    def _warn_on_cost(self, data: DataMatrix, kernel: KernelSpec, B: int) -> None:
        if kernel.kind in (KernelKind.MEAN, KernelKind.COVARIANCE):
            return
        projected = float(B) * data.n ** 2 * kernel.output_dim
        if projected > self.settings.cost_budget:
            warnings.warn(
                f"projected cost B*n^2*d = {projected:.3g} exceeds the budget "
                f"{self.settings.cost_budget:.3g}; the multiplier bootstrap needs O(B*n*d)",
                CostWarning,
                stacklevel=3,
            )

    def _blocks(self, B: int) -> List[range]:
        size = self.settings.block_size
        return [range(start, min(B, start + size)) for start in range(0, B, size)]

    def _map_blocks(self, func, blocks: List[range]) -> list:
        if self.settings.threads == 1 or len(blocks) == 1:
            return [func(block) for block in blocks]
        return Parallel(n_jobs=self.settings.threads, prefer="threads")(
            delayed(func)(block) for block in blocks
        )

    def _replicate_block(self, context: _Context, block: range) -> np.ndarray:
        n = context.data.n
        generators = [context.streams.generator(b) for b in block]
        if context.method == BootstrapMethod.MULTIPLIER:
            multipliers = np.vstack([ReplicateStreams.normals(gen, n) for gen in generators])
            return multipliers @ context.hajek.ghat / math.sqrt(n)
        if context.method == BootstrapMethod.EMPIRICAL:
            out = np.empty((len(block), context.kernel.output_dim))
            for row, gen in enumerate(generators):
                idx = ReplicateStreams.indices(gen, n, n)
                out[row] = self.empirical_draw(context.summary, context.data, context.kernel, idx)
            return out
        weights = 1.0 + np.vstack([ReplicateStreams.normals(gen, n) for gen in generators])
        weighted = self._reweighted_ustat(context.data, context.kernel, weights, context.centered)
        flat = context.method == BootstrapMethod.REWEIGHTED_FLAT
        return self._reweighted_stat(context.summary, weights, weighted, flat)

    @staticmethod
    def _reweighted_stat(summary: UStatSummary,
                         weights: np.ndarray,
                         weighted: np.ndarray,
                         flat: bool) -> np.ndarray:
        root_n = math.sqrt(summary.n)
        stat = root_n * (weighted - summary.u) / 2.0
        if flat:
            stat = stat - root_n * (weights.mean(axis=1) - 1.0)[:, None] * summary.u
        return stat

    @staticmethod
    def _reweighted_ustat(data: DataMatrix,
                          kernel: KernelSpec,
                          weights: np.ndarray,
                          centered: np.ndarray) -> np.ndarray:
        """
        Weighted U-statistics sum_{i != j} w_i w_j h(X_i, X_j) / (n(n-1)) for
        each row of ``weights`` (shape (b, n)); returns shape (b, d).
        """
        n = data.n
        pairs = n * (n - 1)
        s0 = weights.sum(axis=1)
        if kernel.kind == KernelKind.MEAN:
            s1 = weights @ data.values
            squared = (weights ** 2) @ data.values
            return (s0[:, None] * s1 - squared) / pairs
        if kernel.kind == KernelKind.COVARIANCE:
            # h(x, x) = 0 and translation invariance leave s0*S2 - s1 s1^T.
            rows, cols = triu_pairs(data.p)
            s1 = weights @ centered
            outer = centered[:, rows] * centered[:, cols]
            s2 = weights @ outer
            return (s0[:, None] * s2 - s1[:, rows] * s1[:, cols]) / pairs
        out = np.zeros((weights.shape[0], kernel.output_dim))
        x = data.values
        for i in range(n):
            values = kernel.evaluate_against(x[i], x)
            values[i] = 0.0
            out += weights[:, i:i + 1] * (weights @ values)
        return out / pairs
