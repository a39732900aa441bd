"""Convergence diagnostics: split R-hat, effective sample size, credible intervals."""

from __future__ import annotations

import math

import numpy as np


def _split_chains(chains: np.ndarray) -> np.ndarray:
    """Halve each chain; (m, n) -> (2m, n // 2). Odd middle draws are dropped."""
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    half = chains.shape[1] // 2
    if half < 1:
        raise ValueError("need at least 2 draws per chain to split")
    return np.concatenate([chains[:, :half], chains[:, -half:]], axis=0)


def split_rhat(chains: np.ndarray) -> float:
    """Potential scale reduction on split chains (rank-free formulation).

    Returns inf when within-chain variance is zero but chains disagree, and nan when the
    draws carry no variance at all (flagged as undefined).
    """
    split = _split_chains(chains)
    m, n = split.shape
    chain_means = split.mean(axis=1)
    chain_vars = split.var(axis=1, ddof=1)
    w = float(chain_vars.mean())
    b = n * float(chain_means.var(ddof=1)) if m > 1 else 0.0
    if w == 0.0:
        return math.nan if b == 0.0 else math.inf
    var_hat = (n - 1.0) / n * w + b / n
    return math.sqrt(var_hat / w)


def _autocovariances(chain: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased autocovariances gamma_0..gamma_max_lag via FFT."""
    n = chain.shape[0]
    centered = chain - chain.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centered, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[: max_lag + 1].real
    return acov / n


def effective_sample_size(chains: np.ndarray) -> float:
    """Multi-chain ESS with Geyer truncation at the first negative paired sum.

    Combines chains through the usual pooled-variance autocorrelations, sums
    rho_{2k} + rho_{2k+1} pairs until one goes negative, and returns m*n / tau.
    Returns nan for zero-variance draws.
    """
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    m, n = chains.shape
    if n < 4:
        raise ValueError("need at least 4 draws per chain")
    max_lag = n - 2
    acov = np.stack([_autocovariances(chains[c], max_lag) for c in range(m)])
    chain_vars = acov[:, 0] * n / (n - 1.0)
    w = float(chain_vars.mean())
    if w == 0.0:
        return math.nan
    var_plus = (n - 1.0) / n * w
    if m > 1:
        var_plus += float(chains.mean(axis=1).var(ddof=1))
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    tau = 0.0
    k = 0
    while 2 * k + 1 <= max_lag:
        pair = rho[2 * k] + rho[2 * k + 1]
        if k > 0 and pair < 0.0:
            break
        tau += 2.0 * pair
        k += 1
    tau -= 1.0  # rho_0 was counted twice
    tau = max(tau, 1.0 / math.log1p(m * n))  # numerical floor for antithetic chains
    return m * n / tau


def credible_interval(draws: np.ndarray, mass: float = 0.95) -> tuple[float, float]:
    """Equal-tailed interval via Hazen quantiles of the pooled draws."""
    if not 0.0 < mass < 1.0:
        raise ValueError("mass must be in (0, 1)")
    draws = np.asarray(draws, dtype=float).ravel()
    if draws.size == 0:
        raise ValueError("no draws")
    tail = (1.0 - mass) / 2.0
    lo, hi = np.quantile(draws, [tail, 1.0 - tail], method="hazen")
    return float(lo), float(hi)
