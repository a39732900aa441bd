"""Shared oracles and generators for the test suite.

The oracles here are deliberately independent implementations (quadrature instead of
closed form, finite differences instead of analytic gradients, scipy densities instead
of hand-coded ones) so that agreement is evidence, not tautology.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from bayesmr.data import MRDataset
from bayesmr.model import ModelConfig, ParameterSet


def gauss_hermite_log_likelihood(params, dataset, config, n_points: int = 64) -> float:
    """Quadrature oracle: integrate the confounder out numerically per individual.

    Gauss-Hermite quadrature with weight exp(-t^2): substituting u = sqrt(2) t turns
    E_{U~N(0,1)}[f(U)] into (1/sqrt(pi)) sum_k w_k f(sqrt(2) t_k).
    """
    nodes, weights = np.polynomial.hermite.hermgauss(n_points)
    u = math.sqrt(2.0) * nodes  # (k,)
    z = dataset.genotypes
    x = dataset.exposure
    y = dataset.outcome

    a = params.omega_x + z @ params.alpha
    theta_i = np.full_like(x, params.theta)
    b0 = params.omega_y + z @ params.beta
    if config.interaction_enabled:
        w = dataset.covariate
        a = a + params.psi_xw * w
        theta_i = theta_i + params.psi_yxw * w
        b0 = b0 + params.psi_yw * w
    b = b0 + theta_i * x

    mean_x = a[:, None] + params.delta_x * u[None, :]
    mean_y = b[:, None] + params.delta_y * u[None, :]
    log_px = (-0.5 * math.log(2.0 * math.pi * params.sigma_x ** 2)
              - (x[:, None] - mean_x) ** 2 / (2.0 * params.sigma_x ** 2))
    log_py = (-0.5 * math.log(2.0 * math.pi * params.sigma_y ** 2)
              - (y[:, None] - mean_y) ** 2 / (2.0 * params.sigma_y ** 2))
    log_terms = np.log(weights)[None, :] + log_px + log_py
    m = log_terms.max(axis=1, keepdims=True)
    log_pi_marg = (m[:, 0] + np.log(np.sum(np.exp(log_terms - m), axis=1))
                   - 0.5 * math.log(math.pi))
    return float(np.sum(log_pi_marg))


def central_difference_gradient(f, u: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences, one coordinate at a time."""
    u = np.asarray(u, dtype=float)
    grad = np.empty_like(u)
    for k in range(u.shape[0]):
        up = u.copy()
        un = u.copy()
        up[k] += step
        un[k] -= step
        grad[k] = (f(up) - f(un)) / (2.0 * step)
    return grad


def random_parameter_set(rng: np.random.Generator, j: int, interaction: bool = False) -> ParameterSet:
    """A parameter point comfortably inside the default prior support."""
    phi = np.exp(rng.uniform(-1.5, 1.0, size=j))
    kwargs = {}
    if interaction:
        kwargs = {
            "psi_xw": rng.uniform(-0.8, 0.8),
            "psi_yw": rng.uniform(-0.8, 0.8),
            "psi_yxw": rng.uniform(-0.8, 0.8),
        }
    return ParameterSet(
        omega_x=rng.uniform(-3, 3), omega_y=rng.uniform(-3, 3), theta=rng.uniform(-1, 1),
        alpha=rng.normal(0.0, 0.5, size=j), beta=rng.normal(0.0, 0.3, size=j),
        delta_x=rng.uniform(-1.2, 1.2), delta_y=rng.uniform(-1.2, 1.2),
        sigma_x=rng.uniform(0.4, 1.8), sigma_y=rng.uniform(0.4, 1.8),
        phi=phi, gamma=math.exp(rng.uniform(-1.0, 0.7)),
        mu_alpha=rng.uniform(-1, 1), sigma_alpha=rng.uniform(0.3, 1.5),
        **kwargs,
    )


def simulate_from_params(rng: np.random.Generator, params: ParameterSet, n: int,
                         interaction: bool = False) -> MRDataset:
    """Draw a dataset from the generative model at the given parameters."""
    j = params.n_instruments
    z = rng.integers(0, 3, size=(n, j)).astype(float)
    w = rng.integers(0, 2, size=n).astype(float) if interaction else None
    u = rng.normal(size=n)
    m_x = params.omega_x + z @ params.alpha + params.delta_x * u
    theta_i = params.theta
    if interaction:
        m_x = m_x + params.psi_xw * w
        theta_i = params.theta + params.psi_yxw * w
    x = m_x + params.sigma_x * rng.normal(size=n)
    m_y = params.omega_y + theta_i * x + z @ params.beta + params.delta_y * u
    if interaction:
        m_y = m_y + params.psi_yw * w
    y = m_y + params.sigma_y * rng.normal(size=n)
    return MRDataset(genotypes=z, exposure=x, outcome=y, covariate=w)


def gradient_check_config(j: int, interaction: bool = False, **kwargs) -> ModelConfig:
    """Model config used by finite-difference gradient checks.

    Narrower uniform bounds keep the scaled-logit map gentle: with the default span of
    100 the map's third derivatives are large enough that a central difference with the
    pinned step 1e-5 carries truncation error above the 1e-6 relative tolerance even for
    a correct analytic gradient (verified by Richardson extrapolation).  The math under
    test is identical.
    """
    bounds = {k: (-5.0, 5.0) for k in (
        "omega_x", "omega_y", "theta", "delta_x", "delta_y",
        "mu_alpha", "psi_xw", "psi_yw", "psi_yxw",
    )}
    bounds.update({k: (1e-6, 10.0) for k in ("sigma_x", "sigma_y", "sigma_alpha")})
    return ModelConfig(instrument_count=j, interaction_enabled=interaction,
                       bounds=bounds, **kwargs)


def jittered_state(rng: np.random.Generator, posterior, params: ParameterSet) -> np.ndarray:
    """An unconstrained point near the data-generating parameters.

    Keeping log-posterior magnitudes moderate keeps the finite-difference oracle's
    cancellation error (~eps * |logp| / step) below the comparison floor; wide-bound
    logit coordinates get a small jitter because their constrained span is large.
    """
    from bayesmr.model import to_unconstrained

    u = to_unconstrained(params, posterior.config)
    lay = posterior.layout
    jitter = rng.normal(0.0, 0.25, size=u.shape[0])
    jitter[lay.logit_idx] = rng.normal(0.0, 0.04, size=lay.logit_idx.shape[0])
    return u + jitter


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)
