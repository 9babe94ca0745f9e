"""Bayesian inverse problems with stable-sheet priors."""

from .diagnostics import autocorrelation, effective_sample_size, mean_and_se
from .estimators import (
    WeakConvergenceReport,
    WellposednessReport,
    estimate_log_z,
    prior_responses,
    probe_wellposedness,
    tv_distance_weighted,
    weak_convergence_report,
)
from .mcmc import ChainOutput, mcmc_increments, mcmc_lepage, sign_block_kernel
from .model import ForwardOp, Observation, PosteriorSpec, PriorConfig, SpecError, ndll, ndll_from_lu

__all__ = [
    "ChainOutput",
    "ForwardOp",
    "Observation",
    "PosteriorSpec",
    "PriorConfig",
    "SpecError",
    "WeakConvergenceReport",
    "WellposednessReport",
    "autocorrelation",
    "effective_sample_size",
    "estimate_log_z",
    "mcmc_increments",
    "mcmc_lepage",
    "mean_and_se",
    "ndll",
    "ndll_from_lu",
    "prior_responses",
    "probe_wellposedness",
    "sign_block_kernel",
    "tv_distance_weighted",
    "weak_convergence_report",
]
