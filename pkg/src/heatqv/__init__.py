"""Numerical toolkit for the stochastic heat equation driven by space-time white noise.

Modules
-------
kernels    closed-form and quadrature covariances of ``u``
lemmas     executable covariance inequalities
sampler    exact Gaussian sampling on space-time grids
fd         Crank-Nicolson finite-difference integrator (oracle)
functions  registry of test functions
qcov       partial quadratic covariation estimators and Itô residuals
localtime  occupation measures, kernel local times, Tanaka residuals
harness    experiment configs, statistics, runner and CLI
"""

__version__ = "0.1.0"

from . import fd, functions, kernels, lemmas, localtime, qcov, sampler  # noqa: E402
from .errors import (CapacityError, ConfigError, DomainError, FactorizationError,  # noqa: E402
                     HeatQVError, QuadratureError)

__all__ = [
    "kernels", "lemmas", "sampler", "fd", "functions", "qcov", "localtime",
    "HeatQVError", "DomainError", "QuadratureError", "CapacityError",
    "FactorizationError", "ConfigError",
]
