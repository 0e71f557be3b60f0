"""
Simulation lab for the Gaussian approximation of covariance U-statistics.

Samplers for the epsilon-contaminated elliptical normal (M1), the elliptical
t (M2) and the rank-deficient block-diagonal design, the population Hajek
covariance Gamma of elliptical laws, exact Gaussian reference draws and the
experiment comparing max-type statistics to their Gaussian counterparts.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import linalg

from .applications import CovarianceInference
from .config import EngineSettings
from .exceptions import InvalidArgumentError, NumericalError, ResourceLimitError
from .kernels import DataMatrix, KernelSpec, triu_pairs, upper_triangle_size
from .random_streams import ReplicateStreams
from .ustat import UStatCalculator

logger = logging.getLogger(__name__)

VARIANTS = ("max", "absmax")


class ModelKind(str, Enum):
    M1 = "m1"
    M2 = "m2"
    BLOCK = "block"


class DepKind(str, Enum):
    D1 = "d1"
    D2 = "d2"
    D3 = "d3"
    CUSTOM = "custom"


AR_RHO = {DepKind.D2: 0.7, DepKind.D3: 0.3}

# Parameters of the reference configurations; both give covariance 1.25 V.
DEFAULT_EPSILON = 0.2
DEFAULT_NU = {ModelKind.M1: 1.5, ModelKind.M2: 10.0}


@dataclass(frozen=True, eq=False)
class SimConfig:
    """
    One cell of the simulation grid.

    Attributes:
        model: M1, M2 or BLOCK
        dep: Dependence structure of the scale matrix V (ignored by BLOCK)
        n: Sample size
        p: Dimension; BLOCK requires p = L * m
        reps: Replication count R
        seed: Master seed
        epsilon: M1 contamination probability in (0, 1)
        nu: M1 contamination scale (> 0) or M2 degrees of freedom (> 4)
        L: Number of blocks for BLOCK
        m: Block size for BLOCK
        V: Scale matrix for DepKind.CUSTOM
        sanity: Draw the statistic from the Gaussian reference law itself
        size_B: When positive, also run the covariance test at every
            replication with this many bootstrap replicates
        alpha: Level of that test
    """

    model: ModelKind
    dep: DepKind = DepKind.D2
    n: int = 500
    p: int = 40
    reps: int = 5000
    seed: int = 0
    epsilon: float = DEFAULT_EPSILON
    nu: Optional[float] = None
    L: Optional[int] = None
    m: Optional[int] = None
    V: Optional[np.ndarray] = field(default=None, repr=False)
    sanity: bool = False
    size_B: int = 0
    alpha: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "model", ModelKind(self.model))
        object.__setattr__(self, "dep", DepKind(self.dep))
        if self.nu is None and self.model in DEFAULT_NU:
            object.__setattr__(self, "nu", DEFAULT_NU[self.model])
        if self.n < 3 or self.p < 1 or self.reps < 1:
            raise InvalidArgumentError("need n >= 3, p >= 1 and reps >= 1")
        if self.size_B < 0:
            raise InvalidArgumentError("size_B must be non-negative")
        if self.model == ModelKind.M1:
            if not 0.0 < self.epsilon < 1.0:
                raise InvalidArgumentError(f"M1 needs epsilon in (0, 1), got {self.epsilon}")
            if not self.nu > 0.0:
                raise InvalidArgumentError(f"M1 needs nu > 0, got {self.nu}")
        elif self.model == ModelKind.M2:
            if not self.nu > 4.0:
                raise InvalidArgumentError(
                    f"M2 needs nu > 4 for a finite kurtosis, got {self.nu}"
                )
        else:
            if self.L is None or self.m is None:
                raise InvalidArgumentError("the block design needs L and m")
            if self.L < 1 or self.m < 1 or self.L * self.m != self.p:
                raise InvalidArgumentError(
                    f"the block design needs p = L*m, got p={self.p}, L={self.L}, m={self.m}"
                )
        if self.dep == DepKind.CUSTOM and self.model != ModelKind.BLOCK:
            if self.V is None:
                raise InvalidArgumentError("a custom dependence needs V")
            V = np.asarray(self.V, dtype=float)
            if V.shape != (self.p, self.p):
                raise InvalidArgumentError(f"V must be {self.p}x{self.p}, got {V.shape}")
            object.__setattr__(self, "V", V)

    @property
    def d(self) -> int:
        return upper_triangle_size(self.p)

    def describe(self) -> Dict[str, object]:
        out = {"model": self.model.value, "dep": self.dep.value, "n": self.n, "p": self.p,
               "R": self.reps, "seed": self.seed}
        if self.model == ModelKind.M1:
            out.update(epsilon=self.epsilon, nu=self.nu)
        elif self.model == ModelKind.M2:
            out.update(nu=self.nu)
        else:
            out.update(L=self.L, m=self.m)
        return out


@dataclass(frozen=True, eq=False)
class GammaModel:
    """
    Covariance of the covariance-kernel Hajek projection under an elliptical law.

    Gamma_{(j,k),(m,l)} = (kappa (s_jk s_ml + s_jm s_kl + s_jl s_km)
    + s_jm s_kl + s_jl s_km) / 4, with s the actual covariance.

    Attributes:
        kurtosis: Elliptical kurtosis parameter kappa
        sigma: p x p covariance matrix
    """

    kurtosis: float
    sigma: np.ndarray

    @property
    def p(self) -> int:
        return self.sigma.shape[0]

    @property
    def d(self) -> int:
        return upper_triangle_size(self.p)

    def entry(self, jk: Tuple[int, int], ml: Tuple[int, int]) -> float:
        (j, k), (m, l) = jk, ml
        s = self.sigma
        product = s[j, m] * s[k, l] + s[j, l] * s[k, m]
        return float((self.kurtosis * (s[j, k] * s[m, l] + product) + product) / 4.0)

    def diagonal(self) -> np.ndarray:
        rows, cols = triu_pairs(self.p)
        s = self.sigma
        s_jk = s[rows, cols]
        s_jj_kk = s[rows, rows] * s[cols, cols]
        return ((2.0 * self.kurtosis + 1.0) * s_jk ** 2 + (self.kurtosis + 1.0) * s_jj_kk) / 4.0

    def matrix(self) -> np.ndarray:
        """The full d x d matrix, flat upper-triangle order on both axes."""
        rows, cols = triu_pairs(self.p)
        s = self.sigma
        s_jk = s[rows, cols]
        product = (s[np.ix_(rows, rows)] * s[np.ix_(cols, cols)]
                   + s[np.ix_(rows, cols)] * s[np.ix_(cols, rows)])
        return (self.kurtosis * (np.outer(s_jk, s_jk) + product) + product) / 4.0


@dataclass(frozen=True, eq=False)
class ReferenceDraws:
    """
    Draws of Y ~ N(0, Gamma) with their max and max-abs reductions.
    """

    y: np.ndarray
    max: np.ndarray
    absmax: np.ndarray


@dataclass(frozen=True, eq=False)
class SimulationReport:
    """
    Outcome of one experiment cell.

    Attributes:
        config: Cell configuration
        ks: Two-sample KS distance per variant ("max", "absmax")
        cells: DataFrame with columns rep, t_bar_<variant>, y_bar_<variant>
        curves: DataFrame with columns variant, t, cdf_t_bar, cdf_y_bar
        rejection_rates: Covariance-test rejection rate when size_B > 0
    """

    config: SimConfig
    ks: Dict[str, float]
    cells: pd.DataFrame
    curves: pd.DataFrame
    rejection_rates: Dict[str, float]

    def summary(self) -> Dict[str, object]:
        out = self.config.describe()
        out["ks"] = dict(self.ks)
        if self.rejection_rates:
            out["rejection_rates"] = dict(self.rejection_rates)
        return out


class SimulationLab:
    """
    Data generators, population quantities and the Gaussian-approximation
    experiment.

    Example:
        >>> lab = SimulationLab()
        >>> report = lab.run_gaussian_approx_experiment(
        ...     SimConfig(ModelKind.M1, DepKind.D1, n=500, p=40, reps=5000, seed=1))
        >>> report.ks["absmax"]
    """

    def __init__(self, settings: Optional[EngineSettings] = None):
        """
        Initialize the SimulationLab.

        Args:
            settings: Engine settings; defaults to ``EngineSettings()``
        """
        self.settings = settings or EngineSettings()
        self.calculator = UStatCalculator(self.settings)

    @staticmethod
    def build_dependence(dep: DepKind, p: int, V=None) -> np.ndarray:
        """
        Scale matrix V of a dependence structure.

        D1 is 0.9 J + 0.1 I, D2 and D3 are AR(1) with rho 0.7 and 0.3.
        """
        dep = DepKind(dep)
        if p < 1:
            raise InvalidArgumentError("p must be positive")
        if dep == DepKind.D1:
            return 0.9 * np.ones((p, p)) + 0.1 * np.eye(p)
        if dep in AR_RHO:
            lags = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
            return AR_RHO[dep] ** lags
        if V is None:
            raise InvalidArgumentError("a custom dependence needs V")
        return np.array(V, dtype=float)

    def scale_matrix(self, config: SimConfig) -> np.ndarray:
        if config.model == ModelKind.BLOCK:
            return self.population_covariance(config)
        return self.build_dependence(config.dep, config.p, config.V)

    @staticmethod
    def kurtosis(config: SimConfig) -> float:
        """Elliptical kurtosis parameter kappa of the model."""
        if config.model == ModelKind.M1:
            eps, nu = config.epsilon, config.nu
            return (1.0 + eps * (nu ** 4 - 1.0)) / (1.0 + eps * (nu ** 2 - 1.0)) ** 2 - 1.0
        if config.model == ModelKind.M2:
            if config.nu <= 4.0:
                raise InvalidArgumentError("M2 kurtosis is infinite for nu <= 4")
            return 2.0 / (config.nu - 4.0)
        return 0.0

    @staticmethod
    def covariance_scale(config: SimConfig) -> float:
        """Ratio Cov(X) / V: (1 - eps) + eps nu^2 for M1, nu / (nu - 2) for M2."""
        if config.model == ModelKind.M1:
            return (1.0 - config.epsilon) + config.epsilon * config.nu ** 2
        if config.model == ModelKind.M2:
            return config.nu / (config.nu - 2.0)
        return 1.0

    def population_covariance(self, config: SimConfig) -> np.ndarray:
        if config.model == ModelKind.BLOCK:
            return np.kron(np.eye(config.L), np.ones((config.m, config.m)))
        return self.covariance_scale(config) * self.build_dependence(config.dep, config.p, config.V)

    def gamma_model(self, config: SimConfig) -> GammaModel:
        return GammaModel(kurtosis=self.kurtosis(config),
                          sigma=self.population_covariance(config))

    def population_gamma(self,
                         config: SimConfig,
                         jk: Tuple[int, int],
                         ml: Tuple[int, int]) -> float:
        """
        One entry Gamma_{(j,k),(m,l)} of the population Hajek covariance.

        Args:
            config: Model configuration
            jk: First index pair
            ml: Second index pair

        Returns:
            The covariance entry
        """
        for j in (*jk, *ml):
            if not 0 <= j < config.p:
                raise InvalidArgumentError(f"index {j} out of range [0, {config.p})")
        return self.gamma_model(config).entry(jk, ml)

    def gamma_matrix(self, config: SimConfig) -> np.ndarray:
        if config.d > self.settings.d_limit:
            raise ResourceLimitError(
                f"Gamma would be {config.d}x{config.d}, above d_limit={self.settings.d_limit}"
            )
        return self.gamma_model(config).matrix()

    def cholesky_factor(self, V: np.ndarray) -> np.ndarray:
        """
        Lower Cholesky factor of a positive definite V.

        On failure the factorisation is retried once with relative jitter on
        the diagonal; a second failure raises NumericalError.
        """
        V = np.asarray(V, dtype=float)
        try:
            return linalg.cholesky(V, lower=True)
        except linalg.LinAlgError:
            bump = self.settings.jitter * max(float(np.mean(np.diag(V))), 1.0)
            logger.info("Cholesky failed, retrying with diagonal jitter %.3g", bump)
        try:
            return linalg.cholesky(V + bump * np.eye(V.shape[0]), lower=True)
        except linalg.LinAlgError:
            raise NumericalError("scale matrix is not positive definite",
                                 diagnostics={"jitter": bump,
                                              "min_eigenvalue": float(np.linalg.eigvalsh(V)[0])})

    def sample_model(self,
                     config: SimConfig,
                     count: int,
                     gen: np.random.Generator,
                     factor: Optional[np.ndarray] = None) -> DataMatrix:
        """
        Draw ``count`` observations from the configured model.

        Args:
            config: Model configuration
            count: Number of rows (>= 2)
            gen: Random generator
            factor: Precomputed lower Cholesky factor of V

        Returns:
            DataMatrix of shape (count, p)
        """
        if config.model == ModelKind.BLOCK:
            z = ReplicateStreams.normals(gen, (count, config.L))
            return DataMatrix(np.repeat(z, config.m, axis=1))
        if factor is None:
            factor = self.cholesky_factor(self.build_dependence(config.dep, config.p, config.V))
        x = ReplicateStreams.normals(gen, (count, config.p)) @ factor.T
        if config.model == ModelKind.M1:
            contaminated = ReplicateStreams.uniforms(gen, count) < config.epsilon
            x[contaminated] *= config.nu
        else:
            w = gen.chisquare(config.nu, size=count)
            x = x / np.sqrt(w / config.nu)[:, None]
        return DataMatrix(x)

    def reference_factor(self, gamma: np.ndarray) -> np.ndarray:
        """
        A factor F with F F^T = Gamma for a positive semi-definite Gamma.

        Cholesky is tried first; singular matrices fall back to a symmetric
        eigendecomposition that drops numerically zero eigenvalues.
        """
        gamma = np.asarray(gamma, dtype=float)
        d = gamma.shape[0]
        if d > self.settings.d_limit:
            raise ResourceLimitError(f"Gamma of size {d} exceeds d_limit={self.settings.d_limit}")
        if not gamma.any():
            return np.zeros((d, 1))
        try:
            return linalg.cholesky(gamma, lower=True)
        except linalg.LinAlgError:
            logger.debug("Gamma is singular, factorising by eigendecomposition")
        eigen, vectors = linalg.eigh(gamma)
        tol = 10.0 * d * np.finfo(float).eps * float(np.max(np.abs(eigen)))
        if eigen.min() < -tol:
            raise NumericalError("Gamma is not positive semi-definite",
                                 diagnostics={"min_eigenvalue": float(eigen.min())})
        keep = eigen > tol
        return vectors[:, keep] * np.sqrt(eigen[keep])

    def sample_gaussian_reference(self,
                                  factor: np.ndarray,
                                  count: int,
                                  seed: int = 0) -> ReferenceDraws:
        """
        Draw Y = F z, z standard normal, and reduce each draw to its max and max-abs.

        Args:
            factor: d x r factor of Gamma, or a length-d vector of standard
                deviations for a diagonal Gamma
            count: Number of draws
            seed: Master seed; draw b uses stream b

        Returns:
            ReferenceDraws with y of shape (count, d)
        """
        factor = np.asarray(factor, dtype=float)
        if factor.ndim == 1:
            factor = np.diag(factor)
        if count < 1:
            raise InvalidArgumentError("count must be positive")
        streams = ReplicateStreams(seed)
        size = self.settings.block_size
        blocks = []
        for start in range(0, count, size):
            z = np.vstack([ReplicateStreams.normals(streams.generator(b), factor.shape[1])
                           for b in range(start, min(count, start + size))])
            blocks.append(z @ factor.T)
        y = np.vstack(blocks)
        return ReferenceDraws(y=y, max=y.max(axis=1), absmax=np.abs(y).max(axis=1))

    @staticmethod
    def ks_distance(a, b) -> float:
        """
        Two-sample Kolmogorov-Smirnov distance sup_t |F_a(t) - F_b(t)|.
        """
        a = np.sort(np.asarray(a, dtype=float).ravel())
        b = np.sort(np.asarray(b, dtype=float).ravel())
        if a.size == 0 or b.size == 0:
            raise InvalidArgumentError("KS distance needs two nonempty samples")
        pooled = np.concatenate([a, b])
        cdf_a = np.searchsorted(a, pooled, side="right") / a.size
        cdf_b = np.searchsorted(b, pooled, side="right") / b.size
        return float(np.max(np.abs(cdf_a - cdf_b)))

    def run_gaussian_approx_experiment(self, config: SimConfig) -> SimulationReport:
        """
        Compare sqrt(n)(U_n - theta)/2 reductions with their Gaussian reference.

        Replication r draws data from stream 2r and a reference Y from stream
        2r + 1 of the master seed, so the report does not depend on the
        worker count. theta is the population covariance.

        Args:
            config: Experiment cell

        Returns:
            SimulationReport
        """
        if config.d > self.settings.d_limit:
            raise ResourceLimitError(
                f"p={config.p} gives d={config.d}, above d_limit={self.settings.d_limit}"
            )
        theta = self.population_covariance(config)
        rows, cols = triu_pairs(config.p)
        theta_vec = theta[rows, cols]
        ref_factor = self.reference_factor(self.gamma_matrix(config))
        data_factor = None
        if config.model != ModelKind.BLOCK:
            data_factor = self.cholesky_factor(self.scale_matrix(config))
        streams = ReplicateStreams(config.seed)
        inner = CovarianceInference(self.settings.with_threads(1))
        kernel = KernelSpec.covariance(config.p)
        logger.info("experiment %s: R=%d, d=%d, sanity=%s",
                    config.describe(), config.reps, config.d, config.sanity)

        def replicate(r: int) -> Tuple[float, float, float, float, float]:
            data_gen = streams.generator(2 * r)
            ref_gen = streams.generator(2 * r + 1)
            y = ref_factor @ ReplicateStreams.normals(ref_gen, ref_factor.shape[1])
            if config.sanity:
                t = ref_factor @ ReplicateStreams.normals(data_gen, ref_factor.shape[1])
                return t.max(), np.abs(t).max(), y.max(), np.abs(y).max(), math.nan
            data = self.sample_model(config, config.n, data_gen, data_factor)
            u = self.calculator.compute_ustat(data, kernel).u
            t = math.sqrt(config.n) * (u - theta_vec) / 2.0
            rejected = math.nan
            if config.size_B > 0:
                boot_seed = int(data_gen.integers(0, 2 ** 63))
                outcome = inner.simultaneous_test(data, kernel, theta_vec, alpha=config.alpha,
                                                  B=config.size_B, seed=boot_seed)
                rejected = float(outcome.reject)
            return t.max(), np.abs(t).max(), y.max(), np.abs(y).max(), rejected

        if self.settings.threads == 1:
            rows_out = [replicate(r) for r in range(config.reps)]
        else:
            rows_out = Parallel(n_jobs=self.settings.threads, prefer="threads")(
                delayed(replicate)(r) for r in range(config.reps)
            )
        table = np.asarray(rows_out, dtype=float)
        cells = pd.DataFrame({
            "rep": np.arange(config.reps),
            "t_bar_max": table[:, 0],
            "t_bar_absmax": table[:, 1],
            "y_bar_max": table[:, 2],
            "y_bar_absmax": table[:, 3],
        })
        ks = {variant: self.ks_distance(cells[f"t_bar_{variant}"], cells[f"y_bar_{variant}"])
              for variant in VARIANTS}
        rejection_rates = {}
        if config.size_B > 0 and not config.sanity:
            rejection_rates["cov_off"] = float(np.mean(table[:, 4]))
        curves = pd.concat([self._cdf_curves(variant, cells[f"t_bar_{variant}"].to_numpy(),
                                             cells[f"y_bar_{variant}"].to_numpy())
                            for variant in VARIANTS], ignore_index=True)
        logger.info("experiment done: KS max=%.4f absmax=%.4f", ks["max"], ks["absmax"])
        return SimulationReport(config=config, ks=ks, cells=cells, curves=curves,
                                rejection_rates=rejection_rates)

    def _cdf_curves(self, variant: str, t_bar: np.ndarray, y_bar: np.ndarray) -> pd.DataFrame:
        pooled = np.concatenate([t_bar, y_bar])
        grid = np.linspace(pooled.min(), pooled.max(), self.settings.curve_points)
        t_sorted, y_sorted = np.sort(t_bar), np.sort(y_bar)
        return pd.DataFrame({
            "variant": variant,
            "t": grid,
            "cdf_t_bar": np.searchsorted(t_sorted, grid, side="right") / t_sorted.size,
            "cdf_y_bar": np.searchsorted(y_sorted, grid, side="right") / y_sorted.size,
        })

    @staticmethod
    def write_report(report: SimulationReport, out_dir, force: bool = False) -> Dict[str, Path]:
        """
        Write cell_<variant>.csv (rep, t_bar, y_bar), curves.csv and summary.json.

        Args:
            report: Experiment report
            out_dir: Output directory, created if missing
            force: Overwrite an existing non-empty directory

        Returns:
            Mapping from artifact name to path
        """
        out = Path(out_dir)
        if out.exists() and any(out.iterdir()) and not force:
            raise InvalidArgumentError(f"output directory '{out}' is not empty; use --force")
        out.mkdir(parents=True, exist_ok=True)
        paths = {}
        for variant in VARIANTS:
            frame = report.cells[["rep", f"t_bar_{variant}", f"y_bar_{variant}"]]
            frame = frame.rename(columns={f"t_bar_{variant}": "t_bar", f"y_bar_{variant}": "y_bar"})
            paths[f"cell_{variant}"] = out / f"cell_{variant}.csv"
            frame.to_csv(paths[f"cell_{variant}"], index=False)
        paths["curves"] = out / "curves.csv"
        report.curves.to_csv(paths["curves"], index=False)
        paths["summary"] = out / "summary.json"
        paths["summary"].write_text(json.dumps(report.summary(), indent=2) + "\n")
        return paths
