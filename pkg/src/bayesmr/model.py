"""Marginalized Gaussian structural model with horseshoe shrinkage of pleiotropic effects.

Generative model per individual i with allele doses Z_i (length-j vector), latent
confounder U_i ~ N(0, 1), exposure X_i and outcome Y_i:

    X_i | Z_i, U_i        ~ N(omega_x + alpha . Z_i [+ psi_xw W_i]                + delta_x U_i, sigma_x^2)
    Y_i | X_i, Z_i, U_i   ~ N(omega_y + (theta [+ psi_yxw W_i]) X_i + beta . Z_i
                              [+ psi_yw W_i]                         + delta_y U_i, sigma_y^2)

The bracketed terms appear only when the binary-covariate interaction is enabled; the
X-coefficient in the outcome equation is then theta for W=0 and theta + psi_yxw for W=1.

U_i is integrated out in closed form: (X_i, Y_i) | Z_i is bivariate normal whose noise
part (A, B) has variances tau_x^2 = delta_x^2 + sigma_x^2, tau_y^2 = delta_y^2 + sigma_y^2
and covariance lam = delta_x * delta_y.  The log-density is evaluated through the exact
conditional factorization

    log N(X_i; m_x_i, tau_x^2) + log N(Y_i; m_y_i + (lam / tau_x^2) (X_i - m_x_i), v),
    v = tau_y^2 - lam^2 / tau_x^2,

where m_y_i is the outcome mean evaluated at the observed X_i.  v > 0 whenever
sigma_x, sigma_y > 0 since v = (delta_y^2 sigma_x^2 + delta_x^2 sigma_y^2
+ sigma_x^2 sigma_y^2) / tau_x^2.

Priors: beta_j | phi_j ~ N(0, phi_j^2), phi_j | gamma ~ HalfCauchy(gamma),
gamma ~ HalfCauchy(1) (or fixed), alpha_j ~ N(mu_alpha, sigma_alpha^2), and independent
uniform priors with explicit bounds on every remaining parameter (flat: contribute zero
inside the bounds, -inf outside).  The shrinkage weight kappa_j = 1 / (1 + phi_j^2) is 1
for a fully shrunk pleiotropic effect and 0 for an unshrunk one.

Sampling runs on an unconstrained parametrization: scale parameters through log,
two-sided bounded parameters through a scaled logit, alpha through identity, and the
pleiotropic effects non-centered as raw_j = beta_j / phi_j.  The log|Jacobian| of the
full map is included in the unconstrained log-posterior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import MRDataset

LOG_TWO_PI = math.log(2.0 * math.pi)
LOG_TWO_OVER_PI = math.log(2.0 / math.pi)

DEFAULT_LOCATION_BOUNDS = (-50.0, 50.0)
DEFAULT_SCALE_BOUNDS = (1e-6, 50.0)

_LOCATION_KEYS = (
    "omega_x", "omega_y", "theta", "delta_x", "delta_y",
    "mu_alpha", "psi_xw", "psi_yw", "psi_yxw",
)
_SCALE_KEYS = ("sigma_x", "sigma_y", "sigma_alpha")


def default_bounds() -> dict[str, tuple[float, float]]:
    bounds = {k: DEFAULT_LOCATION_BOUNDS for k in _LOCATION_KEYS}
    bounds.update({k: DEFAULT_SCALE_BOUNDS for k in _SCALE_KEYS})
    return bounds


@dataclass(frozen=True)
class ModelConfig:
    """Structural choices: instrument count, interaction flag, prior bounds, fixed gamma."""

    instrument_count: int
    interaction_enabled: bool = False
    bounds: dict[str, tuple[float, float]] = field(default_factory=default_bounds)
    global_scale_fixed: float | None = None

    def __post_init__(self):
        if self.instrument_count < 1:
            raise ValueError("instrument_count must be >= 1")
        merged = default_bounds()
        for key, pair in dict(self.bounds).items():
            if key not in merged:
                raise ValueError(f"unknown bounds key {key!r}")
            lo, hi = float(pair[0]), float(pair[1])
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"bounds for {key!r} must be finite with lower < upper")
            if key in _SCALE_KEYS and lo < 0.0:
                raise ValueError(f"scale bounds for {key!r} must have lower >= 0")
            merged[key] = (lo, hi)
        object.__setattr__(self, "bounds", merged)
        if self.global_scale_fixed is not None and not self.global_scale_fixed > 0.0:
            raise ValueError("global_scale_fixed must be positive")


@dataclass(frozen=True)
class ParameterSet:
    """One point in the constrained parameter space.

    Scale parameters must be strictly positive (constructor-enforced); bound violations of
    the uniform priors are a prior-support matter (log_prior returns -inf), not a
    construction error.
    """

    omega_x: float
    omega_y: float
    theta: float
    alpha: np.ndarray
    beta: np.ndarray
    delta_x: float
    delta_y: float
    sigma_x: float
    sigma_y: float
    phi: np.ndarray
    gamma: float
    mu_alpha: float
    sigma_alpha: float
    psi_xw: float = 0.0
    psi_yw: float = 0.0
    psi_yxw: float = 0.0

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float).ravel()
        beta = np.asarray(self.beta, dtype=float).ravel()
        phi = np.asarray(self.phi, dtype=float).ravel()
        j = alpha.shape[0]
        if beta.shape[0] != j or phi.shape[0] != j:
            raise ValueError("alpha, beta, phi must have equal length")
        scalars = {
            "omega_x": self.omega_x, "omega_y": self.omega_y, "theta": self.theta,
            "delta_x": self.delta_x, "delta_y": self.delta_y, "sigma_x": self.sigma_x,
            "sigma_y": self.sigma_y, "gamma": self.gamma, "mu_alpha": self.mu_alpha,
            "sigma_alpha": self.sigma_alpha, "psi_xw": self.psi_xw,
            "psi_yw": self.psi_yw, "psi_yxw": self.psi_yxw,
        }
        for name, v in scalars.items():
            if not math.isfinite(float(v)):
                raise ValueError(f"{name} must be finite")
        for name, arr in (("alpha", alpha), ("beta", beta), ("phi", phi)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
        if not (self.sigma_x > 0 and self.sigma_y > 0 and self.sigma_alpha > 0):
            raise ValueError("sigma_x, sigma_y, sigma_alpha must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not np.all(phi > 0):
            raise ValueError("phi entries must be positive")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "phi", phi)

    @property
    def n_instruments(self) -> int:
        return self.alpha.shape[0]


def shrinkage_weights(phi: np.ndarray | float) -> np.ndarray | float:
    """kappa = 1 / (1 + phi^2): 1 means fully shrunk, 0 means unshrunk."""
    return 1.0 / (1.0 + np.square(phi))


def derived_theta_prime(params: ParameterSet) -> float:
    """Causal effect of the exposure in the W=1 stratum: theta + psi_yxw."""
    return float(params.theta) + float(params.psi_yxw)


class ParameterLayout:
    """Coordinate layout of the unconstrained space for a given ModelConfig.

    Order: omega_x, omega_y, theta, alpha (j), raw beta (j), delta_x, delta_y,
    log sigma_x, log sigma_y, log phi (j), [log gamma], mu_alpha, log sigma_alpha,
    [psi_xw, psi_yw, psi_yxw].
    """

    def __init__(self, config: ModelConfig):
        j = config.instrument_count
        self.config = config
        self.j = j
        self.gamma_free = config.global_scale_fixed is None
        pos = 0

        def take(k: int) -> int:
            nonlocal pos
            start = pos
            pos += k
            return start

        self.i_omega_x = take(1)
        self.i_omega_y = take(1)
        self.i_theta = take(1)
        a0 = take(j)
        self.sl_alpha = slice(a0, a0 + j)
        r0 = take(j)
        self.sl_raw = slice(r0, r0 + j)
        self.i_delta_x = take(1)
        self.i_delta_y = take(1)
        self.i_log_sigma_x = take(1)
        self.i_log_sigma_y = take(1)
        p0 = take(j)
        self.sl_log_phi = slice(p0, p0 + j)
        self.i_log_gamma = take(1) if self.gamma_free else None
        self.i_mu_alpha = take(1)
        self.i_log_sigma_alpha = take(1)
        if config.interaction_enabled:
            self.i_psi_xw = take(1)
            self.i_psi_yw = take(1)
            self.i_psi_yxw = take(1)
        else:
            self.i_psi_xw = self.i_psi_yw = self.i_psi_yxw = None
        self.dim = pos

        logit_items = [
            ("omega_x", self.i_omega_x), ("omega_y", self.i_omega_y),
            ("theta", self.i_theta), ("delta_x", self.i_delta_x),
            ("delta_y", self.i_delta_y), ("mu_alpha", self.i_mu_alpha),
        ]
        if config.interaction_enabled:
            logit_items += [
                ("psi_xw", self.i_psi_xw), ("psi_yw", self.i_psi_yw),
                ("psi_yxw", self.i_psi_yxw),
            ]
        self.logit_keys = [k for k, _ in logit_items]
        self.logit_idx = np.array([i for _, i in logit_items], dtype=np.intp)
        self.logit_lo = np.array([config.bounds[k][0] for k in self.logit_keys])
        self.logit_hi = np.array([config.bounds[k][1] for k in self.logit_keys])
        self.logit_span = self.logit_hi - self.logit_lo
        self.log_logit_span_sum = float(np.sum(np.log(self.logit_span)))

        log_items = [self.i_log_sigma_x, self.i_log_sigma_y]
        log_items += list(range(p0, p0 + j))
        if self.gamma_free:
            log_items.append(self.i_log_gamma)
        log_items.append(self.i_log_sigma_alpha)
        self.log_idx = np.array(log_items, dtype=np.intp)

        names = ["omega_x", "omega_y", "theta"]
        names += [f"alpha_{k}" for k in range(1, j + 1)]
        names += [f"beta_{k}" for k in range(1, j + 1)]
        names += ["delta_x", "delta_y", "sigma_x", "sigma_y"]
        names += [f"phi_{k}" for k in range(1, j + 1)]
        if self.gamma_free:
            names.append("gamma")
        names += ["mu_alpha", "sigma_alpha"]
        if config.interaction_enabled:
            names += ["psi_xw", "psi_yw", "psi_yxw"]
        self.names = names  # constrained-space name per coordinate position


def _check_match(params: ParameterSet, config: ModelConfig) -> None:
    if params.n_instruments != config.instrument_count:
        raise ValueError(
            f"parameter set has {params.n_instruments} instruments, config expects "
            f"{config.instrument_count}"
        )


def _check_dataset(dataset: MRDataset, config: ModelConfig) -> None:
    if dataset.n_instruments != config.instrument_count:
        raise ValueError(
            f"dataset has {dataset.n_instruments} instruments, config expects "
            f"{config.instrument_count}"
        )
    if config.interaction_enabled and dataset.covariate is None:
        raise ValueError("interaction_enabled requires a covariate column in the dataset")
    if not config.interaction_enabled and dataset.covariate is not None:
        raise ValueError(
            "dataset has a covariate but the model interaction is disabled; "
            "drop the covariate before fitting"
        )


def log_likelihood(params: ParameterSet, dataset: MRDataset, config: ModelConfig) -> float:
    """Exact marginal log-likelihood with the confounder integrated out."""
    _check_match(params, config)
    _check_dataset(dataset, config)
    z = dataset.genotypes
    x = dataset.exposure
    y = dataset.outcome
    n = x.shape[0]

    t = params.delta_x ** 2 + params.sigma_x ** 2
    ty = params.delta_y ** 2 + params.sigma_y ** 2
    lam = params.delta_x * params.delta_y
    c = lam / t
    v = ty - lam * c

    m_x = params.omega_x + z @ params.alpha
    theta_i = params.theta
    m_y = params.omega_y + z @ params.beta
    if config.interaction_enabled:
        w = dataset.covariate
        m_x = m_x + params.psi_xw * w
        theta_i = params.theta + params.psi_yxw * w
        m_y = m_y + params.psi_yw * w
    r_x = x - m_x
    r_y = y - m_y - theta_i * x - c * r_x
    return float(
        -0.5 * n * (2.0 * LOG_TWO_PI + math.log(t) + math.log(v))
        - (r_x @ r_x) / (2.0 * t)
        - (r_y @ r_y) / (2.0 * v)
    )


def _in_bounds(value: float, pair: tuple[float, float]) -> bool:
    return pair[0] < value < pair[1]


def log_prior(params: ParameterSet, config: ModelConfig) -> float:
    """Joint log-prior in the constrained space; -inf outside the uniform supports.

    When ``config.global_scale_fixed`` is set the half-Cauchy scale of phi is that fixed
    value and no hyperprior term for gamma is included.
    """
    _check_match(params, config)
    b = config.bounds
    checks = [
        ("omega_x", params.omega_x), ("omega_y", params.omega_y), ("theta", params.theta),
        ("delta_x", params.delta_x), ("delta_y", params.delta_y),
        ("sigma_x", params.sigma_x), ("sigma_y", params.sigma_y),
        ("mu_alpha", params.mu_alpha), ("sigma_alpha", params.sigma_alpha),
    ]
    if config.interaction_enabled:
        checks += [
            ("psi_xw", params.psi_xw), ("psi_yw", params.psi_yw), ("psi_yxw", params.psi_yxw),
        ]
    for key, value in checks:
        if not _in_bounds(float(value), b[key]):
            return -math.inf

    j = params.n_instruments
    phi = params.phi
    gamma = config.global_scale_fixed if config.global_scale_fixed is not None else params.gamma

    with np.errstate(over="ignore", divide="ignore"):
        log_phi = np.log(phi)
        # beta_j | phi_j ~ N(0, phi_j^2)
        total = -0.5 * j * LOG_TWO_PI - float(np.sum(log_phi)) \
            - 0.5 * float(np.sum((params.beta / phi) ** 2))
        # phi_j | gamma ~ HalfCauchy(gamma): density 2 gamma / (pi (gamma^2 + phi^2)) on phi > 0
        total += j * (LOG_TWO_OVER_PI + math.log(gamma)) \
            - float(np.sum(np.log(gamma * gamma + phi * phi)))
        if config.global_scale_fixed is None:
            total += LOG_TWO_OVER_PI - math.log1p(params.gamma ** 2)
        resid = params.alpha - params.mu_alpha
        total += -0.5 * j * LOG_TWO_PI - j * math.log(params.sigma_alpha) \
            - 0.5 * float(resid @ resid) / params.sigma_alpha ** 2
    return total if math.isfinite(total) else -math.inf


def log_posterior(params: ParameterSet, dataset: MRDataset, config: ModelConfig) -> float:
    """Constrained-space log-posterior (likelihood + prior, no Jacobian)."""
    prior = log_prior(params, config)
    if prior == -math.inf:
        return -math.inf
    return prior + log_likelihood(params, dataset, config)


def _sigmoid(u: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    eu = np.exp(u[~pos])
    out[~pos] = eu / (1.0 + eu)
    return out


def to_unconstrained(params: ParameterSet, config: ModelConfig) -> np.ndarray:
    """Map a ParameterSet strictly inside the prior support to unconstrained coordinates."""
    _check_match(params, config)
    layout = ParameterLayout(config)
    u = np.empty(layout.dim)
    values = {
        "omega_x": params.omega_x, "omega_y": params.omega_y, "theta": params.theta,
        "delta_x": params.delta_x, "delta_y": params.delta_y, "mu_alpha": params.mu_alpha,
        "psi_xw": params.psi_xw, "psi_yw": params.psi_yw, "psi_yxw": params.psi_yxw,
    }
    for key, idx, lo, hi in zip(layout.logit_keys, layout.logit_idx, layout.logit_lo, layout.logit_hi):
        v = float(values[key])
        if not lo < v < hi:
            raise ValueError(f"{key}={v} outside its bounds ({lo}, {hi})")
        u[idx] = math.log(v - lo) - math.log(hi - v)
    for key, value in (("sigma_x", params.sigma_x), ("sigma_y", params.sigma_y),
                       ("sigma_alpha", params.sigma_alpha)):
        if not _in_bounds(float(value), config.bounds[key]):
            raise ValueError(f"{key}={value} outside its bounds {config.bounds[key]}")
    u[layout.i_log_sigma_x] = math.log(params.sigma_x)
    u[layout.i_log_sigma_y] = math.log(params.sigma_y)
    u[layout.i_log_sigma_alpha] = math.log(params.sigma_alpha)
    u[layout.sl_alpha] = params.alpha
    u[layout.sl_log_phi] = np.log(params.phi)
    u[layout.sl_raw] = params.beta / params.phi
    if layout.gamma_free:
        u[layout.i_log_gamma] = math.log(params.gamma)
    return u


def to_constrained(u: np.ndarray, config: ModelConfig) -> ParameterSet:
    """Inverse of to_unconstrained."""
    layout = ParameterLayout(config)
    u = np.asarray(u, dtype=float).ravel()
    if u.shape[0] != layout.dim:
        raise ValueError(f"state has dimension {u.shape[0]}, layout expects {layout.dim}")
    s = _sigmoid(u[layout.logit_idx])
    loc = layout.logit_lo + layout.logit_span * s
    by_key = dict(zip(layout.logit_keys, loc))
    phi = np.exp(u[layout.sl_log_phi])
    gamma = math.exp(u[layout.i_log_gamma]) if layout.gamma_free else config.global_scale_fixed
    return ParameterSet(
        omega_x=by_key["omega_x"], omega_y=by_key["omega_y"], theta=by_key["theta"],
        alpha=u[layout.sl_alpha].copy(), beta=u[layout.sl_raw] * phi,
        delta_x=by_key["delta_x"], delta_y=by_key["delta_y"],
        sigma_x=math.exp(u[layout.i_log_sigma_x]), sigma_y=math.exp(u[layout.i_log_sigma_y]),
        phi=phi, gamma=gamma,
        mu_alpha=by_key["mu_alpha"], sigma_alpha=math.exp(u[layout.i_log_sigma_alpha]),
        psi_xw=by_key.get("psi_xw", 0.0), psi_yw=by_key.get("psi_yw", 0.0),
        psi_yxw=by_key.get("psi_yxw", 0.0),
    )


class UnconstrainedPosterior:
    """HMC target: unconstrained log-posterior with its exact analytic gradient.

    The value is log_likelihood + log_prior + log|Jacobian| of the constraining map, so
    that the pushforward of the constrained posterior is sampled without bound rejections
    (the uniform scale bounds remain as -inf walls in the prior support).
    """

    def __init__(self, dataset: MRDataset, config: ModelConfig):
        _check_dataset(dataset, config)
        self.config = config
        self.layout = ParameterLayout(config)
        self.dim = self.layout.dim
        self.z = np.ascontiguousarray(dataset.genotypes)
        self.zt = np.ascontiguousarray(dataset.genotypes.T)
        self.x = dataset.exposure
        self.y = dataset.outcome
        self.w = dataset.covariate
        self.n = self.x.shape[0]
        if config.interaction_enabled:
            self.xw = self.x * self.w
        b = config.bounds
        self._sigma_x_bounds = b["sigma_x"]
        self._sigma_y_bounds = b["sigma_y"]
        self._sigma_alpha_bounds = b["sigma_alpha"]

    def value(self, u: np.ndarray) -> float:
        return self.value_and_grad(u, want_grad=False)[0]

    def value_and_grad(self, u: np.ndarray, want_grad: bool = True) -> tuple[float, np.ndarray]:
        """Returns (log-posterior, gradient). Out of support: (-inf, zero gradient)."""
        lay = self.layout
        j = lay.j
        n = self.n
        zero_grad = np.zeros(lay.dim)

        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            s = _sigmoid(u[lay.logit_idx])
            loc = lay.logit_lo + lay.logit_span * s
            log_scales = u[lay.log_idx]
            if np.any(np.abs(log_scales) > 600.0):
                return -math.inf, zero_grad
            scales = np.exp(log_scales)
            omega_x, omega_y, theta, delta_x, delta_y, mu_alpha = loc[:6]
            if self.config.interaction_enabled:
                psi_xw, psi_yw, psi_yxw = loc[6:9]
            sigma_x = scales[0]
            sigma_y = scales[1]
            phi = scales[2:2 + j]
            k = 2 + j
            if lay.gamma_free:
                gamma = scales[k]
                k += 1
            else:
                gamma = self.config.global_scale_fixed
            sigma_alpha = scales[k]

            if not (_in_bounds(sigma_x, self._sigma_x_bounds)
                    and _in_bounds(sigma_y, self._sigma_y_bounds)
                    and _in_bounds(sigma_alpha, self._sigma_alpha_bounds)):
                return -math.inf, zero_grad

            alpha = u[lay.sl_alpha]
            raw = u[lay.sl_raw]
            beta = raw * phi

            # ----- likelihood -----
            t = delta_x * delta_x + sigma_x * sigma_x
            ty = delta_y * delta_y + sigma_y * sigma_y
            lam = delta_x * delta_y
            c = lam / t
            v = ty - lam * c  # > 0 since sigma_x, sigma_y > 0

            m_x = omega_x + self.z @ alpha
            m_y = omega_y + self.z @ beta
            if self.config.interaction_enabled:
                m_x += psi_xw * self.w
                m_y += psi_yw * self.w + psi_yxw * self.xw
            r_x = self.x - m_x
            r_y = self.y - m_y - theta * self.x - c * r_x
            sxx = r_x @ r_x
            syy = r_y @ r_y
            ll = (-0.5 * n * (2.0 * LOG_TWO_PI + math.log(t) + math.log(v))
                  - sxx / (2.0 * t) - syy / (2.0 * v))

            # ----- prior -----
            log_phi = np.log(phi)
            sum_log_phi = float(np.sum(log_phi))
            phi_sq = phi * phi
            gp = gamma * gamma + phi_sq
            prior = (-0.5 * j * LOG_TWO_PI - sum_log_phi - 0.5 * float(raw @ raw))
            prior += j * (LOG_TWO_OVER_PI + math.log(gamma)) - float(np.sum(np.log(gp)))
            if lay.gamma_free:
                prior += LOG_TWO_OVER_PI - math.log1p(gamma * gamma)
            resid_a = alpha - mu_alpha
            saa = float(resid_a @ resid_a)
            prior += (-0.5 * j * LOG_TWO_PI - j * math.log(sigma_alpha)
                      - 0.5 * saa / (sigma_alpha * sigma_alpha))

            # ----- Jacobian: logit maps, log maps, and the beta non-centering -----
            jac = (lay.log_logit_span_sum + float(np.sum(np.log(s) + np.log1p(-s)))
                   + float(np.sum(log_scales)) + sum_log_phi)

            logp = ll + prior + jac
            if not math.isfinite(logp):
                return -math.inf, zero_grad
            if not want_grad:
                return logp, zero_grad

            # ----- constrained-space gradients -----
            s_x = r_x / t
            s_y = r_y / v
            g_omega_y = float(np.sum(s_y))
            g_theta = float(s_y @ self.x)
            g_beta = self.zt @ s_y  # likelihood part
            h = s_x - c * s_y
            g_omega_x = float(np.sum(h))
            g_alpha = self.zt @ h - resid_a / (sigma_alpha * sigma_alpha)

            sxy = r_x @ r_y
            e_v = -0.5 * n / v + syy / (2.0 * v * v)
            a_t = (-0.5 * n / t + sxx / (2.0 * t * t)
                   - (lam / (t * t)) * (sxy / v) + (lam * lam / (t * t)) * e_v)
            a_l = sxy / (v * t) - (2.0 * lam / t) * e_v
            g_delta_x = 2.0 * delta_x * a_t + delta_y * a_l
            g_sigma_x = 2.0 * sigma_x * a_t
            g_delta_y = 2.0 * delta_y * e_v + delta_x * a_l
            g_sigma_y = 2.0 * sigma_y * e_v

            g_beta = g_beta - raw / phi  # prior dN(beta;0,phi^2)/dbeta = -beta/phi^2
            g_phi = (raw * raw - 1.0) / phi - 2.0 * phi / gp
            g_mu = float(np.sum(resid_a)) / (sigma_alpha * sigma_alpha)
            g_sigma_alpha = -j / sigma_alpha + saa / (sigma_alpha ** 3)

            # ----- chain rule to unconstrained coordinates -----
            g = np.empty(lay.dim)
            g[lay.sl_alpha] = g_alpha
            g[lay.sl_raw] = g_beta * phi
            g_loc = np.empty(loc.shape[0])
            g_loc[0] = g_omega_x
            g_loc[1] = g_omega_y
            g_loc[2] = g_theta
            g_loc[3] = g_delta_x
            g_loc[4] = g_delta_y
            g_loc[5] = g_mu
            if self.config.interaction_enabled:
                g_loc[6] = float(h @ self.w)
                g_loc[7] = float(s_y @ self.w)
                g_loc[8] = float(s_y @ self.xw)
            g[lay.logit_idx] = g_loc * (lay.logit_span * s * (1.0 - s)) + (1.0 - 2.0 * s)
            g[lay.i_log_sigma_x] = g_sigma_x * sigma_x + 1.0
            g[lay.i_log_sigma_y] = g_sigma_y * sigma_y + 1.0
            # log phi coordinate moves both phi and beta = raw * phi; Jacobian adds 2
            g[lay.sl_log_phi] = g_phi * phi + g_beta * beta + 2.0
            if lay.gamma_free:
                g_gamma = (j / gamma - float(np.sum(2.0 * gamma / gp))
                           - 2.0 * gamma / (1.0 + gamma * gamma))
                g[lay.i_log_gamma] = g_gamma * gamma + 1.0
            g[lay.i_log_sigma_alpha] = g_sigma_alpha * sigma_alpha + 1.0

            if not np.all(np.isfinite(g)):
                return -math.inf, zero_grad
            return logp, g

    def log_abs_det_jacobian(self, u: np.ndarray) -> float:
        """log|det d(constrained)/d(unconstrained)| at u (includes the beta non-centering)."""
        lay = self.layout
        u = np.asarray(u, dtype=float).ravel()
        s = _sigmoid(u[lay.logit_idx])
        return float(
            lay.log_logit_span_sum + np.sum(np.log(s) + np.log1p(-s))
            + np.sum(u[lay.log_idx]) + np.sum(u[lay.sl_log_phi])
        )


def constrain_draws(draws: np.ndarray, config: ModelConfig) -> np.ndarray:
    """Vectorized to_constrained over a (n_draws, dim) array of unconstrained states.

    Returns an (n_draws, dim) array of constrained values in ParameterLayout name order.
    """
    layout = ParameterLayout(config)
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    out = np.empty_like(draws)
    s = _sigmoid(draws[:, layout.logit_idx])
    out[:, layout.logit_idx] = layout.logit_lo + layout.logit_span * s
    out[:, layout.log_idx] = np.exp(draws[:, layout.log_idx])
    out[:, layout.sl_alpha] = draws[:, layout.sl_alpha]
    out[:, layout.sl_raw] = draws[:, layout.sl_raw] * out[:, layout.sl_log_phi]
    return out
