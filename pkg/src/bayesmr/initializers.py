"""Chain initialization: MAP by gradient ascent, optional mean-field VI, jittered starts."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import MRDataset
from .model import ModelConfig, ParameterSet, UnconstrainedPosterior, to_constrained


@dataclass(frozen=True)
class MAPResult:
    state: np.ndarray
    params: ParameterSet
    log_posterior: float
    converged: bool
    iterations: int
    gradient_norm: float


@dataclass(frozen=True)
class VIResult:
    means: np.ndarray
    log_sds: np.ndarray
    params: ParameterSet
    elbo_trace: np.ndarray  # running-best estimate per step (non-decreasing)
    fell_back: bool
    iterations: int


def maximize_with_backtracking(value_and_grad, x0, max_iterations: int = 500,
                               gradient_tolerance: float = 1e-4):
    """Gradient-based ascent with Armijo backtracking; returns the best point seen.

    Search directions come from a BFGS inverse-curvature estimate built from the
    observed gradients (reset to steepest ascent whenever it stops being an ascent
    direction).  Plain steepest ascent is hopeless here: the unconstraining map and
    uncentered regressors leave the posterior with condition numbers around 1e6,
    which quasi-Newton directions absorb.  Every trial step is safeguarded by
    backtracking, so accepted moves never decrease the objective.

    Returns (x, value, converged, iterations, gradient_norm).
    """
    x = np.array(x0, dtype=float)
    value, grad = value_and_grad(x)
    if not math.isfinite(value):
        raise ValueError("starting point has non-finite objective")
    dim = x.shape[0]
    identity = np.eye(dim)
    inv_curvature = identity.copy()
    best_x, best_value = x.copy(), value
    iterations = 0
    grad_norm = float(np.linalg.norm(grad))
    for iterations in range(1, max_iterations + 1):
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < gradient_tolerance:
            return best_x, best_value, True, iterations - 1, grad_norm

        direction = inv_curvature @ grad
        slope = float(grad @ direction)
        if not math.isfinite(slope) or slope <= 0.0:
            inv_curvature = identity.copy()
            direction = grad
            slope = grad_norm * grad_norm

        t = 1.0
        accepted = False
        for _ in range(60):
            candidate = x + t * direction
            cand_value, cand_grad = value_and_grad(candidate)
            if math.isfinite(cand_value) and cand_value >= value + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if not np.array_equal(inv_curvature, identity):
                inv_curvature = identity.copy()  # retry from steepest ascent next pass
                continue
            # no acceptable ascent step along the gradient; stop at the best point
            return best_x, best_value, False, iterations, grad_norm

        s = candidate - x
        y = grad - cand_grad  # gradient change of the negated (convex) objective
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            if np.array_equal(inv_curvature, identity):
                inv_curvature = (sy / float(y @ y)) * identity
            rho = 1.0 / sy
            left = identity - rho * np.outer(s, y)
            inv_curvature = left @ inv_curvature @ left.T + rho * np.outer(s, s)

        x, value, grad = candidate, cand_value, cand_grad
        if value > best_value:
            best_x, best_value = x.copy(), value
    grad_norm = float(np.linalg.norm(grad))
    converged = grad_norm < gradient_tolerance
    return best_x, best_value, converged, iterations, grad_norm


def map_estimate(dataset: MRDataset, config: ModelConfig, max_iterations: int = 500,
                 gradient_tolerance: float = 1e-4) -> MAPResult:
    """Local maximizer of the unconstrained log-posterior, started from the origin."""
    posterior = UnconstrainedPosterior(dataset, config)
    x0 = np.zeros(posterior.dim)
    x, value, converged, iterations, grad_norm = maximize_with_backtracking(
        posterior.value_and_grad, x0, max_iterations, gradient_tolerance
    )
    return MAPResult(
        state=x, params=to_constrained(x, config), log_posterior=value,
        converged=converged, iterations=iterations, gradient_norm=grad_norm,
    )


def advi(value_and_grad, dim: int, seed: int, iterations: int = 2000,
         mc_samples: int = 8, learning_rate: float = 0.05, patience: int = 100,
         initial_mean=None, decay_steps: float = 250.0):
    """Mean-field Gaussian variational fit by stochastic gradient ascent on the ELBO.

    The Adam learning rate decays as 1/(1 + step/decay_steps) so the iterates settle
    instead of wandering at a noise floor proportional to the initial rate.  On normal
    termination the returned fit averages the final quarter of the trajectory, which
    suppresses the Monte Carlo noise any single iterate carries; a stalled run returns
    the best-ELBO iterate seen instead.

    Returns (means, log_sds, best_elbo_trace, stalled, steps_run).  ``stalled`` is True
    when the ELBO estimate failed to improve for ``patience`` consecutive steps.
    """
    rng = np.random.default_rng(seed)
    mean = np.zeros(dim) if initial_mean is None else np.array(initial_mean, dtype=float)
    log_sd = np.full(dim, math.log(0.1))
    # Adam state over the concatenated (mean, log_sd) vector
    m1 = np.zeros(2 * dim)
    m2 = np.zeros(2 * dim)
    b1, b2, eps_adam = 0.9, 0.999, 1e-8

    best_elbo = -math.inf
    best_mean, best_log_sd = mean.copy(), log_sd.copy()
    trace = np.empty(iterations)
    stall = 0
    steps = 0
    tail_start = iterations - max(min(50, iterations), iterations // 4)
    tail_mean = np.zeros(dim)
    tail_log_sd = np.zeros(dim)
    tail_count = 0
    for step in range(1, iterations + 1):
        steps = step
        sd = np.exp(log_sd)
        g_mean = np.zeros(dim)
        g_log_sd = np.zeros(dim)
        energy = 0.0
        for _ in range(mc_samples):
            eps = rng.standard_normal(dim)
            logp, grad = value_and_grad(mean + sd * eps)
            if not math.isfinite(logp):
                # Out-of-support sample.  A zero gradient would censor one tail and
                # let the surviving samples drag the mean toward the support wall;
                # pulling back toward the current approximation is drift-free for the
                # mean and shrinks the scale until samples stay in support.
                logp = -1e12
                grad = -eps / sd
            energy += logp
            g_mean += grad
            g_log_sd += grad * sd * eps
        energy /= mc_samples
        g_mean /= mc_samples
        g_log_sd = g_log_sd / mc_samples + 1.0  # + d(entropy)/d(log_sd)
        elbo = energy + float(np.sum(log_sd)) + 0.5 * dim * (1.0 + math.log(2.0 * math.pi))

        if elbo > best_elbo:
            best_elbo = elbo
            best_mean, best_log_sd = mean.copy(), log_sd.copy()
            stall = 0
        else:
            stall += 1
        trace[step - 1] = best_elbo
        if stall >= patience:
            return best_mean, best_log_sd, trace[:step], True, step

        g = np.concatenate([g_mean, g_log_sd])
        m1 = b1 * m1 + (1.0 - b1) * g
        m2 = b2 * m2 + (1.0 - b2) * g * g
        m1_hat = m1 / (1.0 - b1 ** step)
        m2_hat = m2 / (1.0 - b2 ** step)
        rate = learning_rate / (1.0 + step / decay_steps)
        update = rate * m1_hat / (np.sqrt(m2_hat) + eps_adam)
        mean = mean + update[:dim]
        log_sd = log_sd + update[dim:]
        if step > tail_start:
            tail_mean += mean
            tail_log_sd += log_sd
            tail_count += 1
    if tail_count > 0:
        return tail_mean / tail_count, tail_log_sd / tail_count, trace, False, steps
    return best_mean, best_log_sd, trace, False, steps


def mean_field_vi(dataset: MRDataset, config: ModelConfig, seed: int,
                  iterations: int = 2000, mc_samples: int = 8,
                  learning_rate: float = 0.05, patience: int = 100) -> VIResult:
    """Variational initializer; falls back to the MAP point if the ELBO stalls."""
    posterior = UnconstrainedPosterior(dataset, config)
    means, log_sds, trace, stalled, steps = advi(
        posterior.value_and_grad, posterior.dim, seed, iterations, mc_samples,
        learning_rate, patience,
    )
    if stalled:
        fallback = map_estimate(dataset, config)
        return VIResult(
            means=fallback.state, log_sds=log_sds, params=fallback.params,
            elbo_trace=trace, fell_back=True, iterations=steps,
        )
    return VIResult(
        means=means, log_sds=log_sds, params=to_constrained(means, config),
        elbo_trace=trace, fell_back=False, iterations=steps,
    )


def jittered_inits(center, chain_count: int, seed: int, value_and_grad=None,
                   scale: float = 0.1, max_redraws: int = 20,
                   scales=None) -> np.ndarray:
    """Per-chain starting points: center + N(0, scale^2) noise, finite-density checked.

    ``scales`` optionally stretches the noise per coordinate (so the jitter can
    follow strongly anisotropic posterior scales); the noise sd for coordinate i
    is then scale * scales[i].
    """
    center = np.asarray(center, dtype=float)
    if scales is None:
        spread = np.full(center.shape[0], scale)
    else:
        spread = scale * np.asarray(scales, dtype=float)
        if spread.shape != center.shape or not np.all(np.isfinite(spread)) \
                or np.any(spread <= 0.0):
            raise ValueError("scales must be a positive finite vector matching center")
    inits = np.empty((chain_count, center.shape[0]))
    for c in range(chain_count):
        rng = np.random.default_rng([seed, 0x1717, c])
        for attempt in range(max_redraws + 1):
            candidate = center + spread * rng.standard_normal(center.shape[0])
            if value_and_grad is None:
                inits[c] = candidate
                break
            value, grad = value_and_grad(candidate)
            if math.isfinite(value) and np.all(np.isfinite(grad)):
                inits[c] = candidate
                break
        else:
            raise ValueError(
                f"chain {c}: no finite starting point within {max_redraws} redraws"
            )
    return inits
