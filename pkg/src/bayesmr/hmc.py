"""Hamiltonian Monte Carlo: leapfrog integrator, dual-averaging step size, diagonal mass.

The sampler is generic over any target exposing ``value_and_grad(u) -> (logp, grad)``;
the model-specific wiring lives in ``fit``.  Determinism: each chain draws from its own
``default_rng`` keyed by (seed, chain index), so results are independent of scheduling.

Warm-up schedule: dual averaging toward the target acceptance rate runs throughout
warm-up.  A diagonal mass matrix is estimated from the positions visited in the second
half of warm-up (excluding the final tenth, which re-tunes the step size under the new
metric).  Trajectory lengths are jittered uniformly on {1, ..., L_max} with
L_max ~ 2*pi / step_size, capped by ``max_leapfrog_steps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DIVERGENCE_ENERGY = 1000.0

# dual averaging explores log step size inside these rails; outside them the
# acceptance statistic is a step function and the iteration can oscillate between
# overflow and underflow instead of converging
LOG_STEP_MIN = math.log(1e-12)
LOG_STEP_MAX = math.log(1e4)


@dataclass(frozen=True)
class HMCConfig:
    chain_count: int = 4
    warmup_draws: int = 1000
    sampling_draws: int = 1000
    target_accept: float = 0.8
    max_leapfrog_steps: int = 1024
    seed: int = 0

    def __post_init__(self):
        if self.chain_count < 1:
            raise ValueError("chain_count must be >= 1")
        if self.warmup_draws < 1 or self.sampling_draws < 1:
            raise ValueError("warmup_draws and sampling_draws must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must be in (0, 1)")
        if self.max_leapfrog_steps < 1:
            raise ValueError("max_leapfrog_steps must be >= 1")


@dataclass
class ChainRun:
    """Post-warmup output of one chain."""

    positions: np.ndarray      # (kept, dim) unconstrained draws
    log_posterior: np.ndarray  # (kept,)
    divergent: np.ndarray      # (kept,) bool
    accept_stats: np.ndarray   # (kept,) Metropolis acceptance statistic per draw
    step_size: float
    mass_diag: np.ndarray      # diagonal of the mass matrix used for sampling
    aborted: bool = False      # True when the divergence budget stopped the chain early


def leapfrog(value_and_grad, position, momentum, step_size, n_steps, inv_mass=None,
             logp=None, grad=None, h_ref=None):
    """Integrate Hamiltonian dynamics; flag divergence on energy error > 1000.

    Returns (position, momentum, logp, grad, diverged).  ``logp``/``grad`` at the start
    position may be passed in to save one target evaluation; ``h_ref`` is the reference
    Hamiltonian against which divergence is measured (computed at entry when omitted).
    """
    q = np.array(position, dtype=float)
    p = np.array(momentum, dtype=float)
    if inv_mass is None:
        inv_mass = np.ones_like(q)
    if logp is None or grad is None:
        logp, grad = value_and_grad(q)
    if h_ref is None:
        h_ref = -logp + 0.5 * float(p * inv_mass @ p)

    for _ in range(n_steps):
        p += 0.5 * step_size * grad
        q += step_size * (inv_mass * p)
        logp, grad = value_and_grad(q)
        p += 0.5 * step_size * grad
        energy = -logp + 0.5 * float(p * inv_mass @ p)
        if not math.isfinite(energy) or energy - h_ref > DIVERGENCE_ENERGY:
            return q, p, logp, grad, True
    return q, p, logp, grad, False


class DualAveraging:
    """Nesterov dual averaging of log step size toward a target acceptance statistic."""

    def __init__(self, initial_step_size: float, target: float,
                 gamma: float = 0.05, t0: float = 10.0, kappa: float = 0.75):
        self.mu = math.log(10.0 * initial_step_size)
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.log_step = math.log(initial_step_size)
        self.log_step_avg = self.log_step
        self.h_bar = 0.0
        self.m = 0

    def update(self, accept_stat: float) -> float:
        self.m += 1
        eta = 1.0 / (self.m + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_stat)
        self.log_step = self.mu - math.sqrt(self.m) / self.gamma * self.h_bar
        self.log_step = min(max(self.log_step, LOG_STEP_MIN), LOG_STEP_MAX)
        weight = self.m ** (-self.kappa)
        self.log_step_avg = weight * self.log_step + (1.0 - weight) * self.log_step_avg
        return math.exp(self.log_step)

    @property
    def current(self) -> float:
        return math.exp(self.log_step)

    @property
    def averaged(self) -> float:
        return math.exp(self.log_step_avg)


def find_initial_step_size(value_and_grad, position, inv_mass, rng) -> float:
    """Double/halve a unit step until the one-step acceptance probability crosses 0.5."""
    q = np.asarray(position, dtype=float)
    logp, grad = value_and_grad(q)
    if not math.isfinite(logp):
        raise ValueError("initial position has non-finite log-posterior")
    eps = 1.0
    p = rng.standard_normal(q.shape[0]) / np.sqrt(inv_mass)
    h0 = -logp + 0.5 * float(p * inv_mass @ p)

    def one_step_delta(eps):
        _, p1, logp1, _, _ = leapfrog(value_and_grad, q, p, eps, 1, inv_mass, logp, grad,
                                      h_ref=h0)
        h1 = -logp1 + 0.5 * float(p1 * inv_mass @ p1)
        return h0 - h1  # log acceptance ratio

    delta = one_step_delta(eps)
    if not math.isfinite(delta):
        delta = -math.inf
    direction = 1.0 if delta > math.log(0.5) else -1.0
    for _ in range(100):
        eps *= 2.0 ** direction
        if eps < 1e-10 or eps > 1e7:
            break
        delta = one_step_delta(eps)
        if not math.isfinite(delta):
            delta = -math.inf
        if direction * delta <= direction * math.log(0.5):
            break
    return min(max(eps, 1e-10), 1e7)


def _trajectory_cap(step_size: float, max_steps: int) -> int:
    ideal = int(round(2.0 * math.pi / step_size))
    return max(1, min(max_steps, ideal))


def _estimate_mass_diag(samples: list[np.ndarray], dim: int) -> np.ndarray:
    if len(samples) < 5:
        return np.ones(dim)
    arr = np.asarray(samples)
    var = arr.var(axis=0, ddof=1)
    n = arr.shape[0]
    # shrink toward a small constant, as a guard against near-zero variances
    var = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
    return 1.0 / np.maximum(var, 1e-10)


def run_chain(value_and_grad, init, config: HMCConfig, chain_index: int,
              initial_inv_mass: np.ndarray | None = None,
              involution=None) -> ChainRun:
    """Run one adaptive HMC chain; deterministic given (config.seed, chain_index).

    ``initial_inv_mass`` seeds the metric used while warm-up collects draws; the
    sampling metric is always re-estimated from the second half of warm-up.

    ``involution``, when given, must be a measure-preserving map with
    involution(involution(q)) == q (e.g. a sign flip the target density is
    symmetric under); it is proposed as an extra Metropolis move after every
    transition, which lets chains hop between exactly mirrored modes that
    Hamiltonian trajectories cross only through a density saddle.
    """
    rng = np.random.default_rng([config.seed, chain_index])
    dim = np.asarray(init).shape[0]
    q = np.array(init, dtype=float)
    logp, grad = value_and_grad(q)
    if not math.isfinite(logp):
        raise ValueError(f"chain {chain_index}: initial log-posterior is not finite")

    if initial_inv_mass is None:
        inv_mass = np.ones(dim)
    else:
        inv_mass = np.asarray(initial_inv_mass, dtype=float).copy()
        if inv_mass.shape != (dim,) or not np.all(np.isfinite(inv_mass)) \
                or np.any(inv_mass <= 0.0):
            raise ValueError("initial_inv_mass must be a positive finite vector")
    mass_diag = 1.0 / inv_mass
    sqrt_mass = np.sqrt(mass_diag)
    eps = find_initial_step_size(value_and_grad, q, inv_mass, rng)
    averager = DualAveraging(eps, config.target_accept)

    warmup = config.warmup_draws
    mass_start = warmup // 2
    mass_end = max(mass_start + 1, int(round(0.9 * warmup)))
    provisional_start = warmup // 4
    provisional_window: list[np.ndarray] = []
    mass_window: list[np.ndarray] = []

    def transition(eps_now):
        nonlocal q, logp, grad
        cap = _trajectory_cap(eps_now, config.max_leapfrog_steps)
        n_steps = int(rng.integers(1, cap + 1))
        p0 = sqrt_mass * rng.standard_normal(dim)
        h0 = -logp + 0.5 * float(p0 * inv_mass @ p0)
        q1, p1, logp1, grad1, diverged = leapfrog(
            value_and_grad, q, p0, eps_now, n_steps, inv_mass, logp, grad, h_ref=h0
        )
        if diverged:
            return 0.0, True
        h1 = -logp1 + 0.5 * float(p1 * inv_mass @ p1)
        delta = h0 - h1
        accept_stat = min(1.0, math.exp(min(delta, 0.0)))
        if math.log(rng.random()) < delta:
            q, logp, grad = q1, logp1, grad1
        if involution is not None:
            q_flip = involution(q)
            logp_flip, grad_flip = value_and_grad(q_flip)
            if math.log(rng.random()) < logp_flip - logp:
                q, logp, grad = q_flip, logp_flip, grad_flip
        return accept_stat, False

    def adopt_metric(window):
        nonlocal inv_mass, mass_diag, sqrt_mass, eps, averager
        inv_mass = 1.0 / _estimate_mass_diag(window, dim)
        mass_diag = 1.0 / inv_mass
        sqrt_mass = np.sqrt(mass_diag)
        eps = find_initial_step_size(value_and_grad, q, inv_mass, rng)
        averager = DualAveraging(eps, config.target_accept)

    for m in range(warmup):
        accept_stat, _ = transition(averager.current)
        averager.update(accept_stat)
        if provisional_start <= m < mass_start:
            provisional_window.append(q.copy())
        if mass_start <= m < mass_end:
            mass_window.append(q.copy())
        # a provisional metric halfway through keeps a bad starting metric from
        # contaminating the draws the final (second-half) estimate is built on
        if m == mass_start - 1 and warmup >= 20:
            adopt_metric(provisional_window)
        if m == mass_end - 1 and warmup >= 10:
            adopt_metric(mass_window)

    eps = averager.averaged if averager.m > 0 else averager.current

    kept_q = np.empty((config.sampling_draws, dim))
    kept_lp = np.empty(config.sampling_draws)
    kept_div = np.zeros(config.sampling_draws, dtype=bool)
    kept_accept = np.empty(config.sampling_draws)
    divergence_budget = max(1, int(0.1 * config.sampling_draws))
    n_divergent = 0
    aborted = False
    kept = 0
    for i in range(config.sampling_draws):
        accept_stat, diverged = transition(eps)
        kept_q[i] = q
        kept_lp[i] = logp
        kept_div[i] = diverged
        kept_accept[i] = accept_stat
        kept = i + 1
        if diverged:
            n_divergent += 1
            if n_divergent > divergence_budget:
                aborted = True
                break

    return ChainRun(
        positions=kept_q[:kept], log_posterior=kept_lp[:kept],
        divergent=kept_div[:kept], accept_stats=kept_accept[:kept],
        step_size=eps, mass_diag=mass_diag, aborted=aborted,
    )


def sample_chains(value_and_grad, inits: np.ndarray, config: HMCConfig,
                  initial_inv_mass: np.ndarray | None = None,
                  involution=None) -> list[ChainRun]:
    """Run ``config.chain_count`` chains from the given initial states."""
    inits = np.atleast_2d(np.asarray(inits, dtype=float))
    if inits.shape[0] != config.chain_count:
        raise ValueError(
            f"got {inits.shape[0]} initial states for {config.chain_count} chains"
        )
    return [run_chain(value_and_grad, inits[c], config, c, initial_inv_mass,
                      involution=involution)
            for c in range(config.chain_count)]
