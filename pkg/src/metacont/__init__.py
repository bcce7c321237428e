"""Equilibrium continuation augmented with stochastic metastability diagnostics."""
from .config import RunConfig, load_config, parse_config
from .continuation import Branch, BranchPoint, ContinuationOptions, continue_branch, find_equilibria
from .ellipsoid import DistanceResult, Ellipsoid, distance, distance_along_branch
from .errors import (
    ConfigError,
    ConvergenceError,
    MetacontError,
    NumericalFailure,
    PreconditionError,
)
from .kramers import KramersEstimate, eyring_kramers_time, kramers_along_branch
from .lyapunov import CovarianceResult, covariance_along_branch, solve_lyapunov
from .models import NoiseSpec, SdeSystem, get_model
from .pipeline import run_pipeline
from .sdesim import SimulationConfig, count_passages, euler_maruyama, mean_passages, simulate_passages

__version__ = "0.1.0"

__all__ = [
    "Branch", "BranchPoint", "ConfigError", "ContinuationOptions", "ConvergenceError",
    "CovarianceResult", "DistanceResult", "Ellipsoid", "KramersEstimate", "MetacontError",
    "NoiseSpec", "NumericalFailure", "PreconditionError", "RunConfig", "SdeSystem",
    "SimulationConfig", "continue_branch", "count_passages", "covariance_along_branch",
    "distance", "distance_along_branch", "euler_maruyama", "eyring_kramers_time",
    "find_equilibria", "get_model", "kramers_along_branch", "load_config", "mean_passages",
    "parse_config", "run_pipeline", "simulate_passages", "solve_lyapunov",
]
