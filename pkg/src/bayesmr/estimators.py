"""Estimator-style wrappers with the usual get_params/set_params/clone surface.

Both classes store constructor arguments verbatim and defer all validation to
fit(), so cloning and grid-style parameter sweeps behave as expected.
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .baselines import per_snp_regressions, wme_estimate
from .data import MRDataset
from .fit import run_chains
from .hmc import HMCConfig
from .model import ModelConfig


def _as_dataset(genotypes, exposure, outcome, covariate) -> MRDataset:
    if isinstance(genotypes, MRDataset):
        if exposure is not None or outcome is not None or covariate is not None:
            raise ValueError("pass either a dataset or raw arrays, not both")
        return genotypes
    if exposure is None or outcome is None:
        raise ValueError("exposure and outcome are required with a genotype matrix")
    return MRDataset(genotypes=np.asarray(genotypes, dtype=float),
                     exposure=exposure, outcome=outcome, covariate=covariate)


class BayesianMR(BaseEstimator):
    """Posterior inference for the causal effect under shrinkage of pleiotropy.

    After fit: theta_ (posterior mean), theta_interval_, kappa_mean_ (per-instrument
    shrinkage weights), reliable_, summary_, and draws_ (the full draw store).
    """

    def __init__(self, interaction=False, chains=4, warmup_draws=1000,
                 sampling_draws=1000, target_accept=0.8, max_leapfrog_steps=1024,
                 init="map", interval_mass=0.95, global_scale=None, seed=0):
        self.interaction = interaction
        self.chains = chains
        self.warmup_draws = warmup_draws
        self.sampling_draws = sampling_draws
        self.target_accept = target_accept
        self.max_leapfrog_steps = max_leapfrog_steps
        self.init = init
        self.interval_mass = interval_mass
        self.global_scale = global_scale
        self.seed = seed

    def fit(self, genotypes, exposure=None, outcome=None, covariate=None):
        dataset = _as_dataset(genotypes, exposure, outcome, covariate)
        if self.interaction and dataset.covariate is None:
            raise ValueError("interaction model requires a binary covariate")
        if not self.interaction and dataset.covariate is not None:
            warnings.warn("covariate supplied but interaction disabled; covariate ignored")
            dataset = dataset.drop_covariate()

        model_config = ModelConfig(instrument_count=dataset.n_instruments,
                                   interaction_enabled=self.interaction,
                                   global_scale_fixed=self.global_scale)
        hmc_config = HMCConfig(chain_count=self.chains,
                               warmup_draws=self.warmup_draws,
                               sampling_draws=self.sampling_draws,
                               target_accept=self.target_accept,
                               max_leapfrog_steps=self.max_leapfrog_steps,
                               seed=self.seed)
        store = run_chains(dataset, model_config, hmc_config, init=self.init,
                           interval_mass=self.interval_mass)
        summary = store.summary()
        theta = summary["parameters"]["theta"]

        self.draws_ = store
        self.summary_ = summary
        self.theta_ = theta["mean"]
        self.theta_interval_ = (theta["ci_low"], theta["ci_high"])
        self.kappa_mean_ = store.kappa_mean()
        self.reliable_ = summary["sampler"]["reliable"]
        self.max_rhat_ = store.max_rhat()
        return self

    def posterior_draws(self, name: str) -> np.ndarray:
        if not hasattr(self, "draws_"):
            raise NotFittedError("call fit before requesting draws")
        return self.draws_.stacked(name)


class WeightedMedianMR(BaseEstimator):
    """Weighted-median causal-effect estimate from per-instrument regressions.

    After fit: theta_, theta_interval_, result_ (full estimate record), and
    per_snp_ (the per-instrument regression table).
    """

    def __init__(self, bootstrap_reps=1000, confidence_mass=0.95, seed=0):
        self.bootstrap_reps = bootstrap_reps
        self.confidence_mass = confidence_mass
        self.seed = seed

    def fit(self, genotypes, exposure=None, outcome=None, covariate=None):
        dataset = _as_dataset(genotypes, exposure, outcome, covariate)
        stats = per_snp_regressions(dataset)
        result = wme_estimate(stats, bootstrap_reps=self.bootstrap_reps,
                              confidence_mass=self.confidence_mass, seed=self.seed)
        self.per_snp_ = stats
        self.result_ = result
        self.theta_ = result.estimate
        self.theta_interval_ = (result.ci_low, result.ci_high)
        return self
