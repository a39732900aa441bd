"""Per-instrument summary regressions and the weighted-median effect estimator.

These are the frequentist reference tools: simple least-squares of exposure and
outcome on each instrument separately (also the scatter data for per-SNP
diagnostics), ratio estimates with inverse-variance weights, an interpolated
weighted median, and a parametric-bootstrap confidence interval.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import MRDataset, format_float
from .diagnostics import credible_interval

MIN_EXPOSURE_SLOPE = 1e-12


@dataclass(frozen=True)
class PerSNPStats:
    """Simple-regression coefficients per instrument: X on Z_j and Y on Z_j."""

    b_x: np.ndarray
    se_x: np.ndarray
    b_y: np.ndarray
    se_y: np.ndarray

    def __post_init__(self):
        arrays = (self.b_x, self.se_x, self.b_y, self.se_y)
        if any(a.shape != self.b_x.shape or a.ndim != 1 for a in arrays):
            raise ValueError("per-instrument arrays must share one 1-D shape")

    @property
    def n_instruments(self) -> int:
        return self.b_x.shape[0]


@dataclass(frozen=True)
class WMEResult:
    estimate: float
    ci_low: float
    ci_high: float
    ratios: np.ndarray
    weights: np.ndarray
    used: np.ndarray  # indices of instruments that entered the estimate
    bootstrap_estimates: np.ndarray


def _simple_slopes(feature: np.ndarray, response: np.ndarray):
    """Slope and classical standard error of response ~ 1 + feature, per column."""
    n = response.shape[0]
    fc = feature - feature.mean(axis=0)
    rc = response - response.mean()
    szz = np.sum(fc * fc, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = fc.T @ rc / szz
        rss = np.sum(rc * rc) - slope * slope * szz
        se = np.sqrt(np.maximum(rss, 0.0) / (n - 2) / szz)
    slope = np.where(szz > 0.0, slope, np.nan)
    se = np.where(szz > 0.0, se, np.nan)
    return slope, se


def per_snp_regressions(dataset: MRDataset) -> PerSNPStats:
    """Least-squares slope and standard error of X and Y on each instrument alone.

    Instruments without genotype variation get NaN entries; downstream consumers
    skip them.
    """
    z = dataset.genotypes
    b_x, se_x = _simple_slopes(z, dataset.exposure)
    b_y, se_y = _simple_slopes(z, dataset.outcome)
    degenerate = np.flatnonzero(~np.isfinite(b_x))
    if degenerate.size:
        warnings.warn(
            "instruments without genotype variation excluded: "
            + ", ".join(f"z{k + 1}" for k in degenerate),
            stacklevel=2,
        )
    return PerSNPStats(b_x=b_x, se_x=se_x, b_y=b_y, se_y=se_y)


def weighted_median(values, weights) -> float:
    """Interpolated weighted median.

    Sort values ascending carrying their weights, place each at its normalized
    cumulative-weight midpoint, and linearly interpolate to the 50% point.  With
    equal weights this reproduces the midpoint-interpolated (Hazen) sample median.
    Weights must be nonnegative with a positive total.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if v.ndim != 1 or v.shape != w.shape or v.size == 0:
        raise ValueError("values and weights must be equal-length 1-D, non-empty")
    total = w.sum()
    if not np.all(w >= 0.0) or not total > 0.0:
        raise ValueError("weights must be nonnegative with positive sum")
    order = np.argsort(v, kind="stable")
    v = v[order]
    w = w[order]
    midpoints = (np.cumsum(w) - 0.5 * w) / total
    if 0.5 <= midpoints[0]:
        return float(v[0])
    if 0.5 >= midpoints[-1]:
        return float(v[-1])
    return float(np.interp(0.5, midpoints, v))


def wme_estimate(stats: PerSNPStats, bootstrap_reps: int = 1000,
                 confidence_mass: float = 0.95, seed: int = 0) -> WMEResult:
    """Weighted-median causal-effect estimate with a parametric-bootstrap interval.

    Ratio estimates r_j = b_yj / b_xj are combined by the interpolated weighted
    median under first-order inverse-variance weights w_j = b_xj^2 / se(b_yj)^2.
    The interval resamples both coefficient vectors from normals centered at the
    estimates (weights held fixed) and takes equal-tailed empirical quantiles.
    """
    if bootstrap_reps < 1:
        raise ValueError("bootstrap_reps must be >= 1")
    if not 0.0 < confidence_mass < 1.0:
        raise ValueError("confidence_mass must be in (0, 1)")
    finite = (np.isfinite(stats.b_x) & np.isfinite(stats.b_y)
              & np.isfinite(stats.se_x) & np.isfinite(stats.se_y)
              & (stats.se_y > 0.0))
    weak = finite & (np.abs(stats.b_x) < MIN_EXPOSURE_SLOPE)
    if np.any(weak):
        warnings.warn(
            "instruments with negligible exposure association excluded: "
            + ", ".join(f"z{k + 1}" for k in np.flatnonzero(weak)),
            stacklevel=2,
        )
    used = np.flatnonzero(finite & ~weak)
    if used.size < 3:
        raise ValueError(f"need >= 3 usable instruments, have {used.size}")

    b_x = stats.b_x[used]
    b_y = stats.b_y[used]
    se_x = stats.se_x[used]
    se_y = stats.se_y[used]
    ratios = b_y / b_x
    weights = (b_x / se_y) ** 2
    estimate = weighted_median(ratios, weights)

    rng = np.random.default_rng(seed)
    boot = np.empty(bootstrap_reps)
    for r in range(bootstrap_reps):
        bx = b_x + se_x * rng.standard_normal(used.size)
        by = b_y + se_y * rng.standard_normal(used.size)
        with np.errstate(divide="ignore", invalid="ignore"):
            rr = by / bx
        keep = np.isfinite(rr)
        boot[r] = weighted_median(rr[keep], weights[keep]) if np.any(keep) else estimate
    lo, hi = credible_interval(boot, confidence_mass)
    return WMEResult(estimate=estimate, ci_low=lo, ci_high=hi, ratios=ratios,
                     weights=weights, used=used, bootstrap_estimates=boot)


def write_per_snp_csv(stats: PerSNPStats, path) -> None:
    """Per-instrument regression table; the exposure-vs-outcome scatter data."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["instrument", "b_x", "se_x", "b_y", "se_y"])
        for k in range(stats.n_instruments):
            writer.writerow([str(k + 1)] + [
                format_float(v) for v in
                (stats.b_x[k], stats.se_x[k], stats.b_y[k], stats.se_y[k])
            ])
