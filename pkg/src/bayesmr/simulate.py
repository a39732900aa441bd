"""Synthetic-data generation for the simulation study.

Each replicate draws instrument frequencies, replicate-level structural parameters,
and individual-level noise from its own counter-based random stream, so replicate r
is unaffected by how many other replicates exist and by anything the fitting
procedure does with its own generators.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .data import MRDataset

logger = logging.getLogger(__name__)

PLEIOTROPY_SIGNS = {"balanced": 0.0, "negative": -1.0, "positive": 1.0}

# replicate-level generating distributions (second argument is a variance)
OMEGA_X = 3.3
SIGMA_X = 0.1
SIGMA_Y = 0.1
ALPHA_MEAN, ALPHA_VAR = 0.034, 0.0031
BETA_SCALE, BETA_VAR = 0.012, 0.0025
DELTA_X_MEAN, DELTA_X_VAR = -0.05, 0.0025
DELTA_Y_MEAN, DELTA_Y_VAR = -0.1, 0.0025
OMEGA_Y_MEAN, OMEGA_Y_VAR = -3.7, 0.04
MAF_LOW, MAF_HIGH = 0.1, 0.5


@dataclass(frozen=True)
class ScenarioConfig:
    """One row of the simulation design: pleiotropy type, effect size, sample size."""

    scenario_id: str
    pleiotropy: str
    sample_size: int
    theta_true: float
    instrument_count: int = 20
    pleiotropic_count: int = 10
    replicates: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.pleiotropy not in PLEIOTROPY_SIGNS:
            raise ValueError(
                f"pleiotropy must be one of {sorted(PLEIOTROPY_SIGNS)}, got {self.pleiotropy!r}"
            )
        if self.sample_size < 1:
            raise ValueError("sample_size must be a positive integer")
        if self.instrument_count < 1:
            raise ValueError("instrument_count must be a positive integer")
        if not 1 <= self.pleiotropic_count <= self.instrument_count:
            raise ValueError("pleiotropic_count must be in [1, instrument_count]")
        if self.replicates < 0:
            raise ValueError("replicates must be non-negative")

    @property
    def xi(self) -> float:
        return PLEIOTROPY_SIGNS[self.pleiotropy]


@dataclass(frozen=True)
class GroundTruth:
    """The structural parameters one replicate was generated from."""

    omega_x: float
    omega_y: float
    theta: float
    alpha: np.ndarray
    beta: np.ndarray
    delta_x: float
    delta_y: float
    sigma_x: float
    sigma_y: float
    pleiotropic: tuple[int, ...]  # 0-based instrument indices with free beta_j

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        if alpha.shape != beta.shape or alpha.ndim != 1:
            raise ValueError("alpha and beta must be 1-D arrays of equal length")
        pleio = tuple(int(k) for k in self.pleiotropic)
        if any(not 0 <= k < alpha.size for k in pleio):
            raise ValueError("pleiotropic indices out of range")
        rest = np.setdiff1d(np.arange(alpha.size), np.asarray(pleio, dtype=int))
        if np.any(beta[rest] != 0.0):
            raise ValueError("beta must be exactly 0 for non-pleiotropic instruments")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "pleiotropic", pleio)

    def as_dict(self) -> dict[str, Any]:
        return {
            "omega_x": self.omega_x,
            "omega_y": self.omega_y,
            "theta": self.theta,
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "delta_x": self.delta_x,
            "delta_y": self.delta_y,
            "sigma_x": self.sigma_x,
            "sigma_y": self.sigma_y,
            "pleiotropic": list(self.pleiotropic),
        }


@dataclass(frozen=True)
class ReplicateResult:
    """Outcome of fitting one replicate; `error` is set instead of `value` on failure."""

    replicate: int
    truth: GroundTruth
    value: Any = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _replicate_rng(config: ScenarioConfig, replicate_index: int) -> np.random.Generator:
    # crc32 folds the scenario label into the entropy so scenarios sharing a seed
    # do not share streams; replicate_index keeps streams counter-based
    tag = zlib.crc32(config.scenario_id.encode("utf-8"))
    return np.random.default_rng([config.seed, tag, replicate_index])


def _draw_genotypes(rng: np.random.Generator, n: int, j: int,
                    maf: Sequence[float] | None) -> np.ndarray:
    if maf is None:
        p = rng.uniform(MAF_LOW, MAF_HIGH, size=j)
    else:
        p = np.asarray(maf, dtype=float)
        if p.shape != (j,):
            raise ValueError(f"maf must have shape ({j},), got {p.shape}")
        if np.any((p < 0.0) | (p > 1.0)):
            raise ValueError("minor-allele frequencies must lie in [0, 1]")
    return rng.binomial(2, p, size=(n, j)).astype(float)


def generate_genotypes(n: int, j: int, seed, maf: Sequence[float] | None = None) -> np.ndarray:
    """n x j allele-dose matrix: per instrument, MAF ~ U(0.1, 0.5), doses ~ Binomial(2, p_j).

    Passing `maf` fixes the frequencies instead of drawing them.
    """
    if n < 1 or j < 1:
        raise ValueError("n and j must be positive")
    return _draw_genotypes(np.random.default_rng(seed), n, j, maf)


def generate_replicate(config: ScenarioConfig, replicate_index: int) -> tuple[MRDataset, GroundTruth]:
    """Draw one replicate's parameters and individual-level data."""
    rng = _replicate_rng(config, replicate_index)
    n, j, p = config.sample_size, config.instrument_count, config.pleiotropic_count

    genotypes = _draw_genotypes(rng, n, j, maf=None)

    alpha = rng.normal(ALPHA_MEAN, np.sqrt(ALPHA_VAR), size=j)
    beta = np.zeros(j)
    beta[:p] = rng.normal(BETA_SCALE * config.xi, np.sqrt(BETA_VAR), size=p)
    delta_x = rng.normal(DELTA_X_MEAN, np.sqrt(DELTA_X_VAR))
    delta_y = rng.normal(DELTA_Y_MEAN, np.sqrt(DELTA_Y_VAR))
    omega_y = rng.normal(OMEGA_Y_MEAN, np.sqrt(OMEGA_Y_VAR))

    confounder = rng.standard_normal(n)
    exposure = (OMEGA_X + genotypes @ alpha + delta_x * confounder
                + SIGMA_X * rng.standard_normal(n))
    outcome = (omega_y + config.theta_true * exposure + genotypes @ beta
               + delta_y * confounder + SIGMA_Y * rng.standard_normal(n))

    truth = GroundTruth(
        omega_x=OMEGA_X, omega_y=float(omega_y), theta=config.theta_true,
        alpha=alpha, beta=beta, delta_x=float(delta_x), delta_y=float(delta_y),
        sigma_x=SIGMA_X, sigma_y=SIGMA_Y, pleiotropic=tuple(range(p)),
    )
    dataset = MRDataset(genotypes=genotypes, exposure=exposure, outcome=outcome)
    return dataset, truth


def run_scenario(config: ScenarioConfig,
                 fit_fn: Callable[[MRDataset], Any]) -> list[ReplicateResult]:
    """Generate and fit every replicate; a failing fit is recorded, not fatal."""
    results: list[ReplicateResult] = []
    for r in range(config.replicates):
        dataset, truth = generate_replicate(config, r)
        try:
            value = fit_fn(dataset)
        except Exception as exc:  # noqa: BLE001 - fault isolation across replicates
            logger.warning("scenario %s replicate %d failed: %s: %s",
                           config.scenario_id, r, type(exc).__name__, exc)
            results.append(ReplicateResult(replicate=r, truth=truth,
                                           error=f"{type(exc).__name__}: {exc}"))
        else:
            results.append(ReplicateResult(replicate=r, truth=truth, value=value))
    return results
