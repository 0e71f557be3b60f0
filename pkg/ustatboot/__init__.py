"""
Ustatboot - Bootstrap inference for high-dimensional U-statistics

This package computes order-two U-statistics with vector-valued kernels,
approximates the law of their maxima with the empirical, randomly reweighted
and jackknife multiplier bootstraps, and applies the result to covariance
thresholding and simultaneous covariance and Kendall's tau tests.
"""

__version__ = "0.1.0"

from .kernels import DataMatrix, KernelKind, KernelSpec
from .ustat import UStatCalculator
from .bootstrap import BootstrapEngine, BootstrapMethod, StatFunctional, StatScale
from .applications import CovarianceInference
from .simulation import SimConfig, SimulationLab
from .config import EngineSettings

__all__ = [
    "DataMatrix",
    "KernelKind",
    "KernelSpec",
    "UStatCalculator",
    "BootstrapEngine",
    "BootstrapMethod",
    "StatFunctional",
    "StatScale",
    "CovarianceInference",
    "SimConfig",
    "SimulationLab",
    "EngineSettings",
]
