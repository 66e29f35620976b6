"""Robust intensity estimation for determinantal point processes.

Bessel-type DPP kernels, a spectral sampler on box windows, exact count
laws, count-based and jittered-median intensity estimators, outlier
injection, and a seeded Monte Carlo harness.
"""
__version__ = "0.1.0"

from .kernel import KernelSpec, check_existence, fourier_kernel, kernel_value, pair_correlation
from .sampler import PointPattern, SpectralModel, Window, build_spectral_model, sample_dpp, sample_poisson
from .estimators import lambda_med, lambda_med_dd, lambda_std, make_grid, sample_quantile, sigma2_hat
from .contamination import ContaminationSpec, contaminate
from .harness import ExperimentConfig, run_experiment

__all__ = [
    "__version__",
    "KernelSpec",
    "check_existence",
    "fourier_kernel",
    "kernel_value",
    "pair_correlation",
    "PointPattern",
    "SpectralModel",
    "Window",
    "build_spectral_model",
    "sample_dpp",
    "sample_poisson",
    "lambda_med",
    "lambda_med_dd",
    "lambda_std",
    "make_grid",
    "sample_quantile",
    "sigma2_hat",
    "ContaminationSpec",
    "contaminate",
    "ExperimentConfig",
    "run_experiment",
]
