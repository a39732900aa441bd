"""Aggregation of per-replicate fit results into study-level performance metrics.

Coverage uses the closed interval (an endpoint hit counts as covered); power uses a
strictly positive lower bound. Empty record lists yield nan rather than an error so
a report row can still be written when every replicate of one method failed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import format_float
from .simulate import GroundTruth, ScenarioConfig


@dataclass(frozen=True)
class ReplicateEstimate:
    """Point estimate and interval for the causal effect from one replicate."""

    replicate: int
    estimate: float
    ci_low: float
    ci_high: float

    def __post_init__(self):
        if not (np.isfinite(self.estimate) and np.isfinite(self.ci_low)
                and np.isfinite(self.ci_high)):
            raise ValueError("estimate and interval endpoints must be finite")
        if self.ci_low > self.ci_high:
            raise ValueError("interval endpoints out of order")


def interval_split(records: Sequence[ReplicateEstimate], true_value: float):
    """Fractions of intervals strictly below, covering, and strictly above the truth."""
    if not records:
        return (float("nan"),) * 3
    n = len(records)
    below = sum(r.ci_high < true_value for r in records)
    above = sum(r.ci_low > true_value for r in records)
    return below / n, (n - below - above) / n, above / n


def coverage(records: Sequence[ReplicateEstimate], true_value: float) -> float:
    return interval_split(records, true_value)[1]


def power(records: Sequence[ReplicateEstimate]) -> float:
    if not records:
        return float("nan")
    return sum(r.ci_low > 0.0 for r in records) / len(records)


def bias(records: Sequence[ReplicateEstimate], true_value: float) -> float:
    if not records:
        return float("nan")
    return float(np.mean([r.estimate for r in records]) - true_value)


def shrinkage_separation(kappa_draws: np.ndarray, truth: GroundTruth):
    """Posterior-mean shrinkage weights averaged over the two instrument groups.

    Accepts either per-draw weights with shape (draws, J) or already-averaged
    per-instrument means with shape (J,). Returns (pleiotropic mean,
    non-pleiotropic mean); an empty group yields nan.
    """
    kappa = np.asarray(kappa_draws, dtype=float)
    if kappa.ndim == 2:
        kappa = kappa.mean(axis=0)
    j = truth.alpha.size
    if kappa.shape != (j,):
        raise ValueError(f"expected shrinkage weights for {j} instruments, got shape {kappa.shape}")
    pleio = np.zeros(j, dtype=bool)
    pleio[list(truth.pleiotropic)] = True

    def group_mean(mask):
        return float(kappa[mask].mean()) if mask.any() else float("nan")

    return group_mean(pleio), group_mean(~pleio)


@dataclass(frozen=True)
class ScenarioReport:
    """One report row: a scenario's design plus both methods' metrics."""

    scenario_id: str
    pleiotropy: str
    sample_size: int
    theta_true: float
    replicates: int
    bayes_coverage: float
    bayes_power: float
    bayes_bias: float
    bayes_failures: int
    wme_coverage: float
    wme_power: float
    wme_bias: float
    wme_failures: int


def build_scenario_report(config: ScenarioConfig,
                          bayes_records: Sequence[ReplicateEstimate],
                          wme_records: Sequence[ReplicateEstimate],
                          bayes_failures: int = 0,
                          wme_failures: int = 0) -> ScenarioReport:
    return ScenarioReport(
        scenario_id=config.scenario_id,
        pleiotropy=config.pleiotropy,
        sample_size=config.sample_size,
        theta_true=config.theta_true,
        replicates=config.replicates,
        bayes_coverage=coverage(bayes_records, config.theta_true),
        bayes_power=power(bayes_records),
        bayes_bias=bias(bayes_records, config.theta_true),
        bayes_failures=bayes_failures,
        wme_coverage=coverage(wme_records, config.theta_true),
        wme_power=power(wme_records),
        wme_bias=bias(wme_records, config.theta_true),
        wme_failures=wme_failures,
    )


ESTIMATE_COLUMNS = ["replicate", "estimate", "ci_low", "ci_high"]


def write_estimates_csv(records: Iterable[ReplicateEstimate], path: str | Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(ESTIMATE_COLUMNS)
        for r in records:
            writer.writerow([str(r.replicate), format_float(r.estimate),
                             format_float(r.ci_low), format_float(r.ci_high)])


def read_estimates_csv(path: str | Path) -> list[ReplicateEstimate]:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if header != ESTIMATE_COLUMNS:
            raise ValueError(f"unexpected estimate-file header: {header}")
        return [ReplicateEstimate(replicate=int(row[0]), estimate=float(row[1]),
                                  ci_low=float(row[2]), ci_high=float(row[3]))
                for row in reader]


def write_scenario_report_csv(reports: Sequence[ScenarioReport], path: str | Path) -> None:
    names = [f.name for f in fields(ScenarioReport)]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(names)
        for report in reports:
            row = []
            for name in names:
                value = getattr(report, name)
                row.append(format_float(value) if isinstance(value, float) else str(value))
            writer.writerow(row)


def write_kappa_report_csv(entries: Sequence[tuple[int, np.ndarray, GroundTruth]],
                           path: str | Path) -> None:
    """Long-format per-instrument posterior-mean shrinkage weights across replicates.

    `entries` holds (replicate index, per-instrument kappa means, ground truth).
    """
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["replicate", "instrument", "kappa_mean", "pleiotropic"])
        for replicate, kappa, truth in entries:
            kappa = np.asarray(kappa, dtype=float)
            if kappa.shape != truth.alpha.shape:
                raise ValueError("kappa length does not match instrument count")
            pleio = set(truth.pleiotropic)
            for k in range(kappa.size):
                writer.writerow([str(replicate), f"z{k + 1}",
                                 format_float(kappa[k]), "1" if k in pleio else "0"])
