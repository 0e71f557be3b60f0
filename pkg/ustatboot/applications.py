"""
Covariance thresholding and simultaneous tests driven by the multiplier bootstrap.

The threshold tau* = a(1 - alpha) / beta is the rescaled multiplier-bootstrap
quantile of the full sup-norm |S_n - Sigma|_inf, and the simultaneous tests
compare an off-diagonal (or full) sup-norm statistic against the same kind
of quantile computed with the off-diagonal mask.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .bootstrap import BootstrapEngine, BootstrapMethod, StatFunctional, StatScale
from .config import EngineSettings
from .exceptions import DegeneracyError, InvalidArgumentError, NumericalError
from .kernels import DataMatrix, KernelSpec, vech
from .ustat import HajekTable, UStatCalculator, sample_covariance

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-8
MASKS = ("off", "full")


@dataclass(frozen=True, eq=False)
class ThresholdResult:
    """
    Bootstrap-selected hard threshold and the thresholded covariance matrix.

    Attributes:
        tau_star: Selected threshold a(1 - alpha) / beta
        alpha: Level
        beta: Inflation parameter in (0, 1]
        thresholded: p x p thresholded sample covariance
        B: Replicate count
        seed: Master seed
        quantile: The bootstrap quantile a(1 - alpha) before division by beta
        keep_diag: Whether the diagonal was exempt from thresholding
    """

    tau_star: float
    alpha: float
    beta: float
    thresholded: np.ndarray
    B: int
    seed: int
    quantile: float
    keep_diag: bool = False

    def to_dict(self) -> Dict[str, float]:
        return {"tau_star": self.tau_star, "alpha": self.alpha, "beta": self.beta,
                "B": self.B, "seed": self.seed}


@dataclass(frozen=True)
class TestOutcome:
    """
    Result of a bootstrap simultaneous test.

    Attributes:
        statistic: Observed sup-norm statistic
        critical: Bootstrap critical value a(1 - alpha)
        reject: statistic >= critical and statistic > 0
        pvalue: (1 + #{draws >= statistic}) / (B + 1)
        alpha: Level
        B: Replicate count
        seed: Master seed
        mask: "off" for the off-diagonal statistic, "full" for all entries
    """

    __test__ = False

    statistic: float
    critical: float
    reject: bool
    pvalue: float
    alpha: float
    B: int
    seed: int
    mask: str = "off"

    def to_dict(self) -> Dict[str, object]:
        return {"statistic": self.statistic, "critical": self.critical,
                "reject": self.reject, "pvalue": self.pvalue, "alpha": self.alpha,
                "B": self.B, "seed": self.seed, "mask": self.mask}


@dataclass(frozen=True)
class MatrixNorms:
    sup: float
    off_sup: float
    frobenius: float
    spectral: float
    l1: float

    def to_dict(self) -> Dict[str, float]:
        return {"sup": self.sup, "off_sup": self.off_sup, "frobenius": self.frobenius,
                "spectral": self.spectral, "l1": self.l1}


@dataclass(frozen=True)
class ErrorBounds:
    """
    Deterministic error bounds of the thresholded estimator on the event
    that the threshold dominates |S_n - Sigma|_inf.

    Attributes:
        spectral: Bound on the spectral-norm error
        frobenius: Bound on p^{-1} times the squared Frobenius error
    """

    spectral: float
    frobenius: float


def _as_square(matrix, name: str) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidArgumentError(f"{name} must be a square matrix, got shape {matrix.shape}")
    return matrix


def _symmetrized(matrix, name: str) -> np.ndarray:
    matrix = _as_square(matrix, name)
    asymmetry = float(np.max(np.abs(matrix - matrix.T))) if matrix.size else 0.0
    if asymmetry > SYMMETRY_TOLERANCE:
        raise InvalidArgumentError(
            f"{name} is not symmetric (max |a_ij - a_ji| = {asymmetry:.3g})"
        )
    return (matrix + matrix.T) / 2.0


class CovarianceInference:
    """
    Bootstrap inference for covariance and Kendall concordance matrices.

    Example:
        >>> inference = CovarianceInference()
        >>> result = inference.select_threshold(data, alpha=0.05, beta=1.0, B=1000, seed=3)
        >>> outcome = inference.simultaneous_cov_test(data, np.eye(data.p), alpha=0.05)
    """

    def __init__(self, settings: Optional[EngineSettings] = None):
        """
        Initialize the CovarianceInference.

        Args:
            settings: Engine settings; defaults to ``EngineSettings()``
        """
        self.settings = settings or EngineSettings()
        self.engine = BootstrapEngine(self.settings)
        self.calculator = UStatCalculator(self.settings)

    @staticmethod
    def threshold_matrix(S, tau: float, keep_diag: bool = False) -> np.ndarray:
        """
        Hard-threshold every entry: s_mk is kept when |s_mk| > tau.

        Args:
            S: Square matrix
            tau: Non-negative threshold
            keep_diag: Exempt the diagonal from thresholding

        Returns:
            New p x p matrix
        """
        S = _as_square(S, "S")
        if tau < 0 or math.isnan(tau):
            raise InvalidArgumentError(f"threshold must be non-negative, got {tau}")
        out = np.where(np.abs(S) > tau, S, 0.0)
        if keep_diag:
            np.fill_diagonal(out, np.diag(S))
        return out

    def select_threshold(self,
                         data: DataMatrix,
                         alpha: float = 0.05,
                         beta: float = 1.0,
                         B: Optional[int] = None,
                         seed: int = 0,
                         keep_diag: bool = False) -> ThresholdResult:
        """
        Select tau* from the multiplier bootstrap and threshold the sample covariance.

        Args:
            data: Sample with n >= 3
            alpha: Level in (0, 1)
            beta: Inflation in (0, 1]; tau* = a(1 - alpha) / beta
            B: Replicate count
            seed: Master seed
            keep_diag: Exempt the diagonal from thresholding

        Returns:
            ThresholdResult
        """
        if not 0.0 < beta <= 1.0:
            raise InvalidArgumentError(f"beta must lie in (0, 1], got {beta}")
        kernel = KernelSpec.covariance(data.p)
        hajek = self.calculator.compute_hajek(data, kernel)
        self._check_degeneracy(hajek, None)
        draws = self.engine.run_bootstrap(
            data, kernel, BootstrapMethod.MULTIPLIER,
            StatFunctional.abs_max(StatScale.RESCALED), B=B, seed=seed, hajek=hajek,
        )
        quantile = self.engine.quantile(draws, 1.0 - alpha).value
        tau_star = quantile / beta
        logger.info("selected threshold tau*=%.6g (alpha=%g, beta=%g, B=%d)",
                    tau_star, alpha, beta, draws.B)
        thresholded = self.threshold_matrix(sample_covariance(data.values), tau_star, keep_diag)
        return ThresholdResult(tau_star=tau_star, alpha=float(alpha), beta=float(beta),
                               thresholded=thresholded, B=draws.B, seed=int(seed),
                               quantile=quantile, keep_diag=keep_diag)

    def matrix_norms(self, A) -> MatrixNorms:
        """
        Sup, off-diagonal sup, Frobenius, spectral and l1 norms of a symmetric matrix.

        Inputs whose asymmetry is at most 1e-8 are symmetrized first.
        """
        A = _symmetrized(A, "matrix")
        absolute = np.abs(A)
        off = absolute[~np.eye(A.shape[0], dtype=bool)]
        return MatrixNorms(
            sup=float(absolute.max()),
            off_sup=float(off.max()) if off.size else 0.0,
            frobenius=float(np.linalg.norm(A, "fro")),
            spectral=self.spectral_norm(A),
            l1=float(absolute.sum(axis=0).max()),
        )

    def spectral_norm(self, A: np.ndarray) -> float:
        """
        Largest absolute eigenvalue of a symmetric matrix by power iteration.

        The iteration starts from the all-ones vector and tracks |A x| for unit
        x; it stops when the relative change drops to ``settings.power_tol``.
        If the start vector lies in the null space of A, a ramp vector and then
        the basis vector of the heaviest column are tried instead. A converged
        iterate can still be an eigenvector of a smaller eigenvalue, so the
        iteration is restarted from the iterate plus a ramp and an alternating
        ramp orthogonal to it, and the largest estimate is kept.
        """
        p = A.shape[0]
        if not A.any():
            return 0.0
        ramp = np.arange(1.0, p + 1.0)
        starts = (np.ones(p), ramp, np.eye(p)[int(np.argmax(np.abs(A).sum(axis=0)))])
        for x in starts:
            x = x / np.linalg.norm(x)
            if np.linalg.norm(A @ x) > 0.0:
                break
            logger.debug("power iteration start vector annihilated, perturbing")

        best, x = self._power_iterate(A, x)
        alternating = ramp * np.where(np.arange(p) % 2 == 0, 1.0, -1.0)
        for direction in (ramp, alternating):
            r = direction - (direction @ x) * x
            r_norm = float(np.linalg.norm(r))
            if r_norm <= 1e-12 * float(np.linalg.norm(direction)):
                continue
            start = x + r / r_norm
            start = start / np.linalg.norm(start)
            if not np.linalg.norm(A @ start) > 0.0:
                continue
            estimate, iterate = self._power_iterate(A, start)
            if estimate > best * (1.0 + self.settings.power_tol):
                logger.debug("power iteration restart raised the estimate from %g to %g",
                             best, estimate)
                best, x = estimate, iterate
        return best

    def _power_iterate(self, A: np.ndarray, x: np.ndarray):
        estimate = 0.0
        change = math.inf
        for iteration in range(1, self.settings.power_max_iter + 1):
            y = A @ x
            norm = float(np.linalg.norm(y))
            if norm == 0.0:
                return 0.0, x
            change = abs(norm - estimate)
            if change <= self.settings.power_tol * norm:
                logger.debug("power iteration converged after %d iterations", iteration)
                return norm, y / norm
            estimate = norm
            x = y / norm
        raise NumericalError(
            f"power iteration did not converge in {self.settings.power_max_iter} iterations",
            diagnostics={"iterations": self.settings.power_max_iter,
                         "estimate": estimate,
                         "relative_change": change / estimate if estimate else math.inf},
        )

    def simultaneous_test(self,
                          data: DataMatrix,
                          kernel: KernelSpec,
                          null,
                          alpha: float = 0.05,
                          B: Optional[int] = None,
                          seed: int = 0,
                          mask: str = "off") -> TestOutcome:
        """
        Test H0: theta = theta_0 for a matrix-structured kernel.

        The statistic is |U_n - theta_0| maximised over off-diagonal entries
        (``mask="off"``) or over all entries (``mask="full"``); the critical
        value is the rescaled multiplier-bootstrap quantile of the same
        reduction.

        Args:
            data: Sample with n >= 3
            kernel: Kernel with matrix structure
            null: theta_0 as a p x p symmetric matrix or a flat d-vector
            alpha: Level in (0, 1)
            B: Replicate count
            seed: Master seed
            mask: "off" or "full"

        Returns:
            TestOutcome
        """
        if mask not in MASKS:
            raise InvalidArgumentError(f"mask must be one of {MASKS}, got '{mask}'")
        if not kernel.matrix_structured:
            raise InvalidArgumentError(f"kernel '{kernel.name}' has no matrix structure")
        null_vec = self._null_vector(null, kernel)
        kernel.check_data(data)
        entries = kernel.off_diagonal_mask() if mask == "off" else np.ones(kernel.output_dim, bool)
        if not entries.any():
            raise InvalidArgumentError("p=1 leaves no off-diagonal entries")

        hajek = self.calculator.compute_hajek(data, kernel)
        statistic = float(np.max(np.abs(hajek.u - null_vec)[entries]))
        self._check_degeneracy(hajek, statistic, entries)

        functional = (StatFunctional.off_diag_abs_max(StatScale.RESCALED) if mask == "off"
                      else StatFunctional.abs_max(StatScale.RESCALED))
        draws = self.engine.run_bootstrap(data, kernel, BootstrapMethod.MULTIPLIER, functional,
                                          B=B, seed=seed, hajek=hajek)
        critical = self.engine.quantile(draws, 1.0 - alpha).value
        exceed = int(np.count_nonzero(draws.values >= statistic))
        pvalue = (1.0 + exceed) / (draws.B + 1.0)
        logger.info("%s test: statistic=%.6g critical=%.6g p=%.4g",
                    kernel.name, statistic, critical, pvalue)
        return TestOutcome(statistic=statistic, critical=critical,
                           reject=bool(statistic >= critical and statistic > 0.0),
                           pvalue=pvalue,
                           alpha=float(alpha), B=draws.B, seed=int(seed), mask=mask)

    def simultaneous_cov_test(self,
                              data: DataMatrix,
                              sigma0,
                              alpha: float = 0.05,
                              B: Optional[int] = None,
                              seed: int = 0,
                              mask: str = "off") -> TestOutcome:
        """Test H0: Sigma = sigma0 with the statistic |S_n - sigma0|_inf,off."""
        return self.simultaneous_test(data, KernelSpec.covariance(data.p), sigma0,
                                      alpha=alpha, B=B, seed=seed, mask=mask)

    def kendall_test(self,
                     data: DataMatrix,
                     t0,
                     alpha: float = 0.05,
                     B: Optional[int] = None,
                     seed: int = 0,
                     mask: str = "off") -> TestOutcome:
        """
        Test H0 on the Kendall concordance matrix; ``t0`` holds concordance
        probabilities, so every entry must lie in [0, 1].
        """
        t0 = np.asarray(t0, dtype=float)
        if np.any((t0 < 0.0) | (t0 > 1.0)):
            raise InvalidArgumentError("Kendall null entries must lie in [0, 1]")
        return self.simultaneous_test(data, KernelSpec.kendall(data.p), t0,
                                      alpha=alpha, B=B, seed=seed, mask=mask)

    @staticmethod
    def thresholding_error_bounds(zeta_p: float,
                                  a: float,
                                  r: float = 0.0,
                                  beta: float = 1.0) -> ErrorBounds:
        """
        Error bounds of the thresholded estimator for Sigma in the strong l^r ball.

        Args:
            zeta_p: Sparsity radius max_m sum_k |sigma_mk|^r
            a: Bootstrap quantile a(1 - alpha)
            r: Ball exponent in [0, 1)
            beta: Inflation in (0, 1]; beta = 1 requires r = 0

        Returns:
            ErrorBounds; with r = 0 and beta = 1 these are 6 zeta_p a and
            18 zeta_p a^2
        """
        if not 0.0 <= r < 1.0:
            raise InvalidArgumentError(f"r must lie in [0, 1), got {r}")
        if not 0.0 < beta <= 1.0:
            raise InvalidArgumentError(f"beta must lie in (0, 1], got {beta}")
        if zeta_p < 0 or a < 0:
            raise InvalidArgumentError("zeta_p and a must be non-negative")
        if r == 0.0:
            odds = 1.0
        elif beta == 1.0:
            raise InvalidArgumentError("beta = 1 is only admissible for r = 0")
        else:
            odds = (beta / (1.0 - beta)) ** r
        spectral = ((3.0 + 2.0 * beta) / beta ** (1.0 - r) + odds) * zeta_p * a ** (1.0 - r)
        frobenius = 2.0 * ((4.0 + 3.0 * beta ** 2) / beta ** (2.0 - r) + 2.0 * odds) \
            * zeta_p * a ** (2.0 - r)
        return ErrorBounds(spectral=spectral, frobenius=frobenius)

    @staticmethod
    def sparsity_radius(sigma, r: float = 0.0) -> float:
        """max_m sum_k |sigma_mk|^r, counting nonzero entries when r = 0."""
        sigma = _as_square(sigma, "sigma")
        if not 0.0 <= r < 1.0:
            raise InvalidArgumentError(f"r must lie in [0, 1), got {r}")
        if r == 0.0:
            return float(np.count_nonzero(sigma, axis=1).max())
        return float((np.abs(sigma) ** r).sum(axis=1).max())

    @staticmethod
    def oracle_threshold(data: DataMatrix, sigma) -> float:
        """|S_n - Sigma|_inf, the threshold an oracle knowing Sigma would pick."""
        sigma = _as_square(sigma, "sigma")
        if sigma.shape[0] != data.p:
            raise InvalidArgumentError(f"sigma must be {data.p}x{data.p}")
        return float(np.max(np.abs(sample_covariance(data.values) - sigma)))

    @staticmethod
    def support_oracle_estimator(data: DataMatrix, sigma) -> np.ndarray:
        """Sample covariance restricted to the true support of ``sigma``."""
        sigma = _as_square(sigma, "sigma")
        if sigma.shape[0] != data.p:
            raise InvalidArgumentError(f"sigma must be {data.p}x{data.p}")
        return np.where(sigma != 0.0, sample_covariance(data.values), 0.0)

    @staticmethod
    def _null_vector(null, kernel: KernelSpec) -> np.ndarray:
        null = np.asarray(null, dtype=float)
        p = kernel.input_dim
        if null.ndim == 2:
            if null.shape != (p, p):
                raise InvalidArgumentError(f"null matrix must be {p}x{p}, got {null.shape}")
            return vech(_symmetrized(null, "null matrix"))
        if null.shape != (kernel.output_dim,):
            raise InvalidArgumentError(
                f"null must be a {p}x{p} matrix or a vector of length {kernel.output_dim}"
            )
        return null

    def _check_degeneracy(self,
                          hajek: HajekTable,
                          statistic: Optional[float],
                          entries: Optional[np.ndarray] = None) -> None:
        variances = self.calculator.multiplier_cov(hajek, diagonal_only=True).matrix
        if np.any(variances > 0.0):
            if entries is not None and not np.any(variances[entries] > 0.0):
                logger.warning("the bootstrap law of the tested entries is a point mass at zero; "
                               "only a positive statistic is rejected")
            return
        if statistic is not None and statistic > 0.0:
            logger.warning("the bootstrap law is a point mass at zero; "
                           "any positive statistic is rejected")
            return
        raise DegeneracyError(
            "every Hajek projection estimate has zero variance; the data are degenerate",
            diagnostics={"d": hajek.d, "n": hajek.n},
        )
