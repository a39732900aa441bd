"""End-to-end posterior fitting: initializer -> jittered chain starts -> HMC -> DrawStore."""

from __future__ import annotations

import numpy as np

from .data import MRDataset
from .draws import DrawStore
from .hmc import HMCConfig, sample_chains
from .initializers import advi, jittered_inits, map_estimate
from .model import ModelConfig, ParameterLayout, UnconstrainedPosterior

INIT_METHODS = ("map", "vi", "origin")


class CenteredShear:
    """Volume-preserving linear change of the sampler's working coordinates.

    With regressors far from zero, each intercept trades off almost one-for-one
    against slope x regressor-mean, leaving intercept/slope correlations beyond
    0.97 that no diagonal metric can absorb.  The sampler therefore works in
    coordinates whose intercept rows carry the intercept-at-data-mean
    combination; ``to_standard`` undoes the shear before draws are stored, and
    the unit-determinant map needs no density correction.  Shear coefficients
    use the bound-transform slopes at the origin, where the scaled logit is
    within a percent of linear for values small relative to the default bounds.
    """

    def __init__(self, dataset: MRDataset, config: ModelConfig):
        layout = ParameterLayout(config)
        slope = {key: span / 4.0
                 for key, span in zip(layout.logit_keys, layout.logit_span)}
        z_mean = dataset.genotypes.mean(axis=0)

        cols = list(range(layout.sl_alpha.start, layout.sl_alpha.stop))
        coefs = list(z_mean / slope["omega_x"])
        if config.interaction_enabled:
            cols.append(layout.i_psi_xw)
            coefs.append(float(dataset.covariate.mean())
                         * slope["psi_xw"] / slope["omega_x"])
        rows = [(layout.i_omega_x, np.array(cols, dtype=np.intp), np.array(coefs))]

        # The pleiotropy block also feeds the outcome intercept, but its effects
        # are shrunk toward zero and enter as products of coordinates, so only
        # the direct slopes are worth absorbing.
        cols = [layout.i_theta]
        coefs = [float(dataset.exposure.mean()) * slope["theta"] / slope["omega_y"]]
        if config.interaction_enabled:
            cols.append(layout.i_psi_yw)
            coefs.append(float(dataset.covariate.mean())
                         * slope["psi_yw"] / slope["omega_y"])
            cols.append(layout.i_psi_yxw)
            coefs.append(float(np.mean(dataset.exposure * dataset.covariate))
                         * slope["psi_yxw"] / slope["omega_y"])
        rows.append((layout.i_omega_y, np.array(cols, dtype=np.intp), np.array(coefs)))
        self.rows = rows

    def to_standard(self, sheared: np.ndarray) -> np.ndarray:
        q = np.array(sheared, dtype=float)
        for row, cols, coefs in self.rows:
            q[..., row] -= q[..., cols] @ coefs
        return q

    def from_standard(self, standard: np.ndarray) -> np.ndarray:
        q = np.array(standard, dtype=float)
        for row, cols, coefs in self.rows:
            q[..., row] += q[..., cols] @ coefs
        return q

    def wrap(self, value_and_grad):
        """Log density and gradient as functions of the sheared coordinates."""

        def wrapped(q_sheared):
            value, grad = value_and_grad(self.to_standard(q_sheared))
            g = np.array(grad, dtype=float)
            for row, cols, coefs in self.rows:
                g[cols] -= coefs * g[row]
            return value, g

        return wrapped


def delta_sign_involution(config: ModelConfig):
    """Joint sign flip of the confounder loadings, when it is an exact symmetry.

    The likelihood sees delta_x and delta_y only through their squares and
    product, so jointly negating them mirrors the posterior exactly; with
    symmetric prior bounds the flip is also exact in the logit coordinates
    (sigmoid(-u) = 1 - sigmoid(u)).  Returns None when custom bounds break the
    symmetry.
    """
    for key in ("delta_x", "delta_y"):
        lo, hi = config.bounds[key]
        if lo != -hi:
            return None
    layout = ParameterLayout(config)
    idx = np.array([layout.i_delta_x, layout.i_delta_y], dtype=np.intp)

    def flip(q, _idx=idx):
        out = np.array(q, dtype=float)
        out[_idx] = -out[_idx]
        return out

    return flip


def curvature_inv_mass(value_and_grad, center: np.ndarray,
                       relative_step: float = 1e-4) -> np.ndarray:
    """Per-coordinate inverse mass from finite-difference curvature at ``center``.

    The warm-up metric only needs the right order of magnitude per coordinate, so
    the magnitude of a one-sided difference of the gradient is enough; coordinates
    with non-finite or vanishing curvature fall back to unit inverse mass.
    """
    center = np.asarray(center, dtype=float)
    _, g0 = value_and_grad(center)
    inv_mass = np.ones(center.size)
    for i in range(center.size):
        h = relative_step * max(1.0, abs(center[i]))
        shifted = center.copy()
        shifted[i] += h
        _, g = value_and_grad(shifted)
        curvature = abs((g[i] - g0[i]) / h)
        if np.isfinite(curvature) and curvature > 0.0:
            inv_mass[i] = 1.0 / min(max(curvature, 1e-6), 1e8)
    return inv_mass


def run_chains(dataset: MRDataset, model_config: ModelConfig, hmc_config: HMCConfig,
               init: str = "map", interval_mass: float = 0.95,
               jitter_scale: float = 1.0) -> DrawStore:
    """Fit the model by HMC and return the collected draws.

    ``init`` picks the chain-start strategy: a posterior-mode search (``"map"``),
    a mean-field Gaussian approximation whose means seed the chains (``"vi"``),
    or the origin of the unconstrained space (``"origin"``).  Chain starts are
    jittered around the chosen center so the split-chain diagnostics can detect
    disagreement between chains.
    """
    if init not in INIT_METHODS:
        raise ValueError(f"unknown init method {init!r}; expected one of {INIT_METHODS}")
    posterior = UnconstrainedPosterior(dataset, model_config)
    shear = CenteredShear(dataset, model_config)
    wrapped = shear.wrap(posterior.value_and_grad)

    vi_scales = None
    if init == "map":
        center = shear.from_standard(map_estimate(dataset, model_config).state)
    elif init == "vi":
        # Fitting the factorized approximation in the sheared coordinates both
        # suits its independence assumption and yields per-coordinate scales
        # that are meaningful for the sampler's metric.  Patience equals the
        # iteration budget: a noisy ELBO plateau here is convergence, and the
        # final-quarter average only exists on normal termination.
        iterations = 2000
        means, log_sds, trace, stalled, _ = advi(wrapped, posterior.dim,
                                                 seed=hmc_config.seed,
                                                 iterations=iterations,
                                                 patience=iterations)
        if stalled or not np.all(np.isfinite(means)) or trace[-1] <= trace[0]:
            center = shear.from_standard(map_estimate(dataset, model_config).state)
        else:
            center = means
            vi_scales = np.exp(2.0 * log_sds)
    else:
        center = np.zeros(posterior.dim)

    # The fitted per-coordinate variational variances track posterior scales better
    # than local curvature can on the shrinkage-scale coordinates.
    if vi_scales is not None:
        warmup_metric = vi_scales
    else:
        warmup_metric = curvature_inv_mass(wrapped, center)
    # Jitter in units of the metric's scales: coordinate spreads differ by four
    # orders of magnitude here, and an isotropic jitter would plant some starts
    # hundreds of posterior sds out.  The clip guards against coordinates whose
    # curvature estimate degenerated to (near) zero.
    inits = jittered_inits(center, hmc_config.chain_count, hmc_config.seed,
                           value_and_grad=wrapped, scale=jitter_scale,
                           scales=np.minimum(np.sqrt(warmup_metric), 1.0))
    runs = sample_chains(wrapped, inits, hmc_config, initial_inv_mass=warmup_metric,
                         involution=delta_sign_involution(model_config))
    for run in runs:
        # row by row so the arithmetic is bit-identical to the in-chain map and
        # the stored log densities remain exactly recomputable
        run.positions = np.array([shear.to_standard(p) for p in run.positions])
    return DrawStore(runs, model_config, hmc_config, interval_mass=interval_mass)
