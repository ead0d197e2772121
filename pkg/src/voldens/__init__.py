"""Nonparametric estimation of the log-volatility density in stochastic volatility models.

Returns ``X_t = sigma_t Z_t`` are log-squared, ``log X^2 = log sigma^2 + log Z^2``,
and the known law of ``log Z^2`` is removed by Fourier deconvolution.
"""

from .deconv import (
    EstimateGrid,
    TableCache,
    build_vh_table,
    default_bandwidth,
    estimate_multivariate,
    estimate_univariate,
    vh_eval,
)
from .kernels import KernelSpec, check_condition_w, wand_kernel
from .models import ModelSpec, garch, log_ar1, log_square, simulate
from .specfun import log_gamma_complex, noise_density, phi_k

__version__ = "0.1.0"

__all__ = [
    "EstimateGrid",
    "KernelSpec",
    "ModelSpec",
    "TableCache",
    "build_vh_table",
    "check_condition_w",
    "default_bandwidth",
    "estimate_multivariate",
    "estimate_univariate",
    "garch",
    "log_ar1",
    "log_gamma_complex",
    "log_square",
    "noise_density",
    "phi_k",
    "simulate",
    "vh_eval",
    "wand_kernel",
]
