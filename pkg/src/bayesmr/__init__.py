"""Bayesian Mendelian randomization with horseshoe shrinkage of pleiotropic effects.

Individual-level library: exact marginal likelihood over a latent confounder,
Hamiltonian Monte Carlo sampling, MAP/variational initialization, a weighted-median
baseline estimator, a simulation-study harness, and a command-line interface.
"""

from .data import DataFormatError, MRDataset, load_dataset_csv, write_dataset_csv
from .model import (
    ModelConfig,
    ParameterSet,
    UnconstrainedPosterior,
    derived_theta_prime,
    log_likelihood,
    log_posterior,
    log_prior,
    shrinkage_weights,
    to_constrained,
    to_unconstrained,
)

__all__ = [
    "DataFormatError",
    "MRDataset",
    "ModelConfig",
    "ParameterSet",
    "UnconstrainedPosterior",
    "derived_theta_prime",
    "load_dataset_csv",
    "log_likelihood",
    "log_posterior",
    "log_prior",
    "shrinkage_weights",
    "to_constrained",
    "to_unconstrained",
    "write_dataset_csv",
]

__version__ = "0.1.0"
