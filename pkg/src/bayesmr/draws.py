"""Posterior draw storage, summaries, and on-disk artifacts (CSV draws, JSON summary)."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .data import format_float
from .diagnostics import credible_interval, effective_sample_size, split_rhat
from .hmc import ChainRun, HMCConfig
from .model import ModelConfig, ParameterLayout, ParameterSet, constrain_draws, to_constrained


def _json_float(value: float) -> float | None:
    """Strict-JSON representation: NaN (undefined) -> null, infinities clamped finite."""
    if math.isnan(value):
        return None
    if math.isinf(value):
        return 1e308 if value > 0 else -1e308
    return float(value)


# The likelihood sees the confounder loadings and noise scales only through
# tau_x^2 = delta_x^2 + sigma_x^2, tau_y^2 = delta_y^2 + sigma_y^2 and
# lambda = delta_x * delta_y; the four raw coordinates individually sit on a
# prior-flat curve, so convergence is diagnosed on the identified combinations
# instead (the per-parameter diagnostics stay in the summary regardless).
UNIDENTIFIED_COORDS = ("delta_x", "delta_y", "sigma_x", "sigma_y")


class DrawStore:
    """Post-warmup draws of all chains in the constrained parametrization.

    Derived per-draw quantities (theta_prime under the interaction model, the shrinkage
    weights kappa_j) are computed from the stored constrained values, so recomputing them
    from a serialized table reproduces them bit for bit.
    """

    def __init__(self, chain_runs: list[ChainRun], model_config: ModelConfig,
                 hmc_config: HMCConfig, interval_mass: float = 0.95):
        if not chain_runs:
            raise ValueError("no chains")
        if not 0.0 < interval_mass < 1.0:
            raise ValueError("interval_mass must be in (0, 1)")
        self.model_config = model_config
        self.hmc_config = hmc_config
        self.interval_mass = interval_mass
        self.layout = ParameterLayout(model_config)
        self.names = list(self.layout.names)
        self.chain_runs = chain_runs
        self.tables = [constrain_draws(run.positions, model_config) for run in chain_runs]
        self.aborted_chains = [c for c, run in enumerate(chain_runs) if run.aborted]
        self.reliable = not self.aborted_chains

        j = model_config.instrument_count
        phi_cols = self.layout.sl_log_phi  # positions hold constrained phi in the tables
        self.kappa = [1.0 / (1.0 + table[:, phi_cols] ** 2) for table in self.tables]
        if model_config.interaction_enabled:
            i_theta = self.layout.i_theta
            i_psi = self.layout.i_psi_yxw
            self.theta_prime = [table[:, i_theta] + table[:, i_psi] for table in self.tables]
        else:
            self.theta_prime = None
        self._j = j

        i_dx = self.names.index("delta_x")
        i_dy = self.names.index("delta_y")
        i_sx = self.names.index("sigma_x")
        i_sy = self.names.index("sigma_y")
        self.identified = {
            "tau_x": [np.sqrt(t[:, i_dx] ** 2 + t[:, i_sx] ** 2) for t in self.tables],
            "tau_y": [np.sqrt(t[:, i_dy] ** 2 + t[:, i_sy] ** 2) for t in self.tables],
            "lambda": [t[:, i_dx] * t[:, i_dy] for t in self.tables],
        }

    # ----- access -----

    @property
    def n_chains(self) -> int:
        return len(self.chain_runs)

    def draw_counts(self) -> list[int]:
        return [t.shape[0] for t in self.tables]

    def parameter_set(self, chain: int, draw: int) -> ParameterSet:
        return to_constrained(self.chain_runs[chain].positions[draw], self.model_config)

    def stacked(self, name: str) -> np.ndarray:
        if name == "theta_prime":
            if self.theta_prime is None:
                raise KeyError("theta_prime requires the interaction model")
            return np.concatenate(self.theta_prime)
        if name in self.identified:
            return np.concatenate(self.identified[name])
        col = self.names.index(name)
        return np.concatenate([t[:, col] for t in self.tables])

    def per_chain(self, name: str) -> np.ndarray | None:
        """(chains, common_draws) matrix for diagnostics; None if chains are too short."""
        common = min(self.draw_counts())
        if common < 4:
            return None
        if name == "theta_prime":
            series = self.theta_prime
        elif name in self.identified:
            series = self.identified[name]
        else:
            col = self.names.index(name)
            series = [t[:, col] for t in self.tables]
        return np.stack([s[:common] for s in series])

    def kappa_mean(self) -> np.ndarray:
        stacked = np.concatenate(self.kappa, axis=0)
        return stacked.mean(axis=0)

    def divergent_fraction(self) -> list[float]:
        return [float(run.divergent.mean()) if run.divergent.size else 0.0
                for run in self.chain_runs]

    def gate_names(self) -> list[str]:
        """Quantities the reliability verdict quantifies over.

        Every sampled parameter except the four coordinates that are only
        likelihood-identified through tau_x, tau_y, lambda, plus those three
        combinations themselves (and theta_prime when present).
        """
        names = [n for n in self.names if n not in UNIDENTIFIED_COORDS]
        names += list(self.identified)
        if self.theta_prime is not None:
            names.append("theta_prime")
        return names

    def max_rhat(self) -> float:
        """Largest split R-hat across identified quantities; nan when chains are too short."""
        worst = -math.inf
        for name in self.gate_names():
            matrix = self.per_chain(name)
            if matrix is None:
                return math.nan
            value = split_rhat(matrix)
            if math.isnan(value):
                continue  # zero-variance parameter: no mixing evidence either way
            worst = max(worst, value)
        return worst if worst > -math.inf else math.nan

    # ----- summaries -----

    def _entry(self, name: str) -> dict:
        draws = self.stacked(name)
        lo, hi = credible_interval(draws, self.interval_mass)
        matrix = self.per_chain(name)
        if matrix is None:
            rhat = math.nan
            ess = math.nan
        else:
            rhat = split_rhat(matrix)
            ess = effective_sample_size(matrix)
        return {
            "mean": float(draws.mean()),
            "sd": float(draws.std(ddof=1)) if draws.size > 1 else 0.0,
            "ci_low": lo,
            "ci_high": hi,
            "rhat": _json_float(rhat),
            "ess": _json_float(ess),
        }

    def summary(self) -> dict:
        params = {name: self._entry(name) for name in self.names}
        derived = {name: self._entry(name) for name in self.identified}
        if self.theta_prime is not None:
            derived["theta_prime"] = self._entry("theta_prime")
        return {
            "interval_mass": self.interval_mass,
            "parameters": params,
            "derived": derived,
            "sampler": {
                "chain_count": self.hmc_config.chain_count,
                "warmup_draws": self.hmc_config.warmup_draws,
                "sampling_draws": self.hmc_config.sampling_draws,
                "seed": self.hmc_config.seed,
                "draw_counts": self.draw_counts(),
                "step_sizes": [run.step_size for run in self.chain_runs],
                "mean_accept": [float(run.accept_stats.mean()) if run.accept_stats.size
                                else 0.0 for run in self.chain_runs],
                "divergent_fraction": self.divergent_fraction(),
                "aborted_chains": self.aborted_chains,
                "max_rhat": _json_float(self.max_rhat()),
                "reliable": self.reliable,
            },
        }

    # ----- artifacts -----

    def write_draws_csv(self, path: str | Path) -> None:
        header = ["chain", "draw"] + self.names
        if self.theta_prime is not None:
            header.append("theta_prime")
        header += ["log_posterior", "divergent"]
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for c, (run, table) in enumerate(zip(self.chain_runs, self.tables)):
                for i in range(table.shape[0]):
                    row = [str(c), str(i)]
                    row.extend(format_float(v) for v in table[i])
                    if self.theta_prime is not None:
                        row.append(format_float(self.theta_prime[c][i]))
                    row.append(format_float(run.log_posterior[i]))
                    row.append("1" if run.divergent[i] else "0")
                    writer.writerow(row)

    def write_summary_json(self, path: str | Path) -> None:
        with Path(path).open("w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_kappa_csv(self, path: str | Path) -> None:
        stacked = np.concatenate(self.kappa, axis=0)
        qs = np.quantile(stacked, [0.025, 0.25, 0.5, 0.75, 0.975], axis=0, method="hazen")
        means = stacked.mean(axis=0)
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["instrument", "kappa_mean", "kappa_q025", "kappa_q25",
                             "kappa_median", "kappa_q75", "kappa_q975"])
            for k in range(self._j):
                writer.writerow([str(k + 1)] + [
                    format_float(v) for v in
                    (means[k], qs[0, k], qs[1, k], qs[2, k], qs[3, k], qs[4, k])
                ])
