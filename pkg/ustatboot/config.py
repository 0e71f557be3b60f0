"""
Engine settings shared by the calculators.
"""

import os
from dataclasses import dataclass, replace
from typing import Optional

from .exceptions import InvalidArgumentError

THREADS_ENV_VAR = "USTAT_BOOT_THREADS"


@dataclass(frozen=True)
class EngineSettings:
    """
    Tunable defaults for the U-statistic and bootstrap engines.

    Attributes:
        d_limit: Largest d for which a d x d matrix may be materialised
        default_B: Replicate count used when none is given
        cost_budget: Projected B*n^2*d above which slow bootstrap paths warn
        block_size: Replicates per work block; fixed so that the partition,
            and therefore every emitted number, ignores the worker count
        threads: Number of joblib workers
        power_tol: Relative tolerance of the spectral-norm power iteration
        power_max_iter: Iteration cap of the power iteration
        jitter: Relative diagonal jitter added when a Cholesky factorisation fails
        curve_points: Evaluation grid size for simulated cdf curves
    """

    d_limit: int = 4096
    default_B: int = 1000
    cost_budget: float = 2e9
    block_size: int = 256
    threads: int = 1
    power_tol: float = 1e-10
    power_max_iter: int = 10000
    jitter: float = 1e-10
    curve_points: int = 512

    def __post_init__(self):
        if self.d_limit < 1:
            raise InvalidArgumentError("d_limit must be positive")
        if self.block_size < 1:
            raise InvalidArgumentError("block_size must be positive")
        if self.threads < 1:
            raise InvalidArgumentError("threads must be positive")

    @classmethod
    def from_env(cls, threads: Optional[int] = None, **overrides) -> "EngineSettings":
        """
        Build settings, falling back to USTAT_BOOT_THREADS for the worker count.

        Args:
            threads: Explicit worker count; wins over the environment
            **overrides: Any other EngineSettings field

        Returns:
            EngineSettings instance
        """
        if threads is None:
            raw = os.environ.get(THREADS_ENV_VAR)
            if raw:
                try:
                    threads = int(raw)
                except ValueError:
                    raise InvalidArgumentError(
                        f"{THREADS_ENV_VAR} must be an integer, got '{raw}'"
                    )
            else:
                threads = 1
        return cls(threads=threads, **overrides)

    def with_threads(self, threads: int) -> "EngineSettings":
        """Return a copy using a different worker count."""
        return replace(self, threads=threads)
