"""Core model: likelihood, priors, transforms, gradients, derived quantities."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from bayesmr.data import MRDataset
from bayesmr.model import (
    ModelConfig,
    ParameterLayout,
    ParameterSet,
    UnconstrainedPosterior,
    constrain_draws,
    derived_theta_prime,
    log_likelihood,
    log_posterior,
    log_prior,
    shrinkage_weights,
    to_constrained,
    to_unconstrained,
)
from conftest import (
    central_difference_gradient,
    gauss_hermite_log_likelihood,
    gradient_check_config,
    jittered_state,
    random_parameter_set,
    simulate_from_params,
)


def unit_params(j=1, **overrides):
    base = dict(
        omega_x=0.0, omega_y=0.0, theta=0.0,
        alpha=np.zeros(j), beta=np.zeros(j),
        delta_x=0.0, delta_y=0.0, sigma_x=1.0, sigma_y=1.0,
        phi=np.ones(j), gamma=1.0, mu_alpha=0.0, sigma_alpha=1.0,
    )
    base.update(overrides)
    return ParameterSet(**base)


class TestLogLikelihood:
    def test_single_point_independent_unit_normals(self):
        # theta=0, deltas=0, unit noise, zero means, x=y=0: two standard normal densities
        data = MRDataset(genotypes=np.zeros((1, 1)), exposure=[0.0], outcome=[0.0])
        config = ModelConfig(instrument_count=1)
        value = log_likelihood(unit_params(), data, config)
        assert value == pytest.approx(-math.log(2.0 * math.pi), abs=1e-12)

    @pytest.mark.parametrize("interaction", [False, True])
    def test_matches_gauss_hermite_quadrature(self, rng, interaction):
        config = ModelConfig(instrument_count=4, interaction_enabled=interaction)
        for _ in range(10):
            params = random_parameter_set(rng, 4, interaction=interaction)
            data = simulate_from_params(rng, params, n=25, interaction=interaction)
            closed = log_likelihood(params, data, config)
            quad = gauss_hermite_log_likelihood(params, data, config)
            assert closed == pytest.approx(quad, abs=1e-8)

    @pytest.mark.parametrize("delta", [0.0, 0.4])
    def test_beta_shift_absorbed_by_intercept(self, rng, delta):
        # a constant genotype column makes the shift expressible through omega_y
        j, n = 3, 30
        params = random_parameter_set(rng, j)
        params = ParameterSet(**{**_asdict(params), "delta_x": delta, "delta_y": delta})
        z = rng.integers(0, 3, size=(n, j)).astype(float)
        z[:, 1] = 1.0
        data = MRDataset(z, rng.normal(size=n), rng.normal(size=n))
        config = ModelConfig(instrument_count=j)
        c = 0.37
        shifted_beta = params.beta.copy()
        shifted_beta[1] += c
        shifted = ParameterSet(**{
            **_asdict(params), "beta": shifted_beta, "omega_y": params.omega_y - c,
        })
        assert log_likelihood(shifted, data, config) == pytest.approx(
            log_likelihood(params, data, config), rel=1e-12
        )

    def test_interaction_with_zero_covariate_matches_base(self, rng):
        params = random_parameter_set(rng, 3)
        data = simulate_from_params(rng, params, n=20)
        with_w = MRDataset(data.genotypes, data.exposure, data.outcome,
                           covariate=np.zeros(20))
        base = log_likelihood(params, data, ModelConfig(instrument_count=3))
        inter = log_likelihood(params, with_w,
                               ModelConfig(instrument_count=3, interaction_enabled=True))
        assert inter == pytest.approx(base, rel=1e-14)

    def test_rejects_mismatched_dataset(self, rng):
        params = random_parameter_set(rng, 3)
        data = simulate_from_params(rng, params, n=10)
        with pytest.raises(ValueError):
            log_likelihood(params, data, ModelConfig(instrument_count=5))


def _asdict(p: ParameterSet) -> dict:
    return {
        "omega_x": p.omega_x, "omega_y": p.omega_y, "theta": p.theta,
        "alpha": p.alpha, "beta": p.beta, "delta_x": p.delta_x, "delta_y": p.delta_y,
        "sigma_x": p.sigma_x, "sigma_y": p.sigma_y, "phi": p.phi, "gamma": p.gamma,
        "mu_alpha": p.mu_alpha, "sigma_alpha": p.sigma_alpha,
        "psi_xw": p.psi_xw, "psi_yw": p.psi_yw, "psi_yxw": p.psi_yxw,
    }


class TestLogPrior:
    def test_reference_point_against_scipy(self):
        # j=1, beta=0, phi=1, gamma=1, alpha=mu_alpha, sigma_alpha=1, rest mid-bounds
        params = unit_params()
        config = ModelConfig(instrument_count=1)
        expected = (
            stats.norm.logpdf(0.0, scale=1.0)            # beta | phi
            + stats.halfcauchy.logpdf(1.0, scale=1.0)    # phi | gamma
            + stats.halfcauchy.logpdf(1.0, scale=1.0)    # gamma
            + stats.norm.logpdf(0.0, scale=1.0)          # alpha | mu_alpha, sigma_alpha
        )
        assert log_prior(params, config) == pytest.approx(expected, abs=1e-12)

    def test_matches_scipy_at_random_points(self, rng):
        config = ModelConfig(instrument_count=5)
        for _ in range(10):
            p = random_parameter_set(rng, 5)
            expected = (
                np.sum(stats.norm.logpdf(p.beta, scale=p.phi))
                + np.sum(stats.halfcauchy.logpdf(p.phi, scale=p.gamma))
                + stats.halfcauchy.logpdf(p.gamma, scale=1.0)
                + np.sum(stats.norm.logpdf(p.alpha, loc=p.mu_alpha, scale=p.sigma_alpha))
            )
            assert log_prior(p, config) == pytest.approx(float(expected), rel=1e-12)

    def test_flat_parameters_do_not_change_prior(self, rng):
        config = ModelConfig(instrument_count=2)
        p = random_parameter_set(rng, 2)
        shifted = ParameterSet(**{**_asdict(p), "omega_x": p.omega_x + 5.0,
                                  "delta_x": -p.delta_x, "theta": 0.9})
        assert log_prior(shifted, config) == log_prior(p, config)

    def test_out_of_bounds_is_minus_inf(self):
        config = ModelConfig(instrument_count=1)
        assert log_prior(unit_params(theta=60.0), config) == -math.inf
        assert log_prior(unit_params(sigma_x=51.0), config) == -math.inf
        assert log_prior(unit_params(sigma_x=1e-7), config) == -math.inf

    def test_vanishing_phi_with_nonzero_beta_diverges(self):
        config = ModelConfig(instrument_count=1)
        tiny = unit_params(beta=np.array([0.5]), phi=np.array([1e-200]))
        assert log_prior(tiny, config) == -math.inf

    def test_fixed_global_scale_drops_hyperprior_term(self, rng):
        p = random_parameter_set(rng, 3)
        free = ModelConfig(instrument_count=3)
        fixed = ModelConfig(instrument_count=3, global_scale_fixed=p.gamma)
        expected_gap = stats.halfcauchy.logpdf(p.gamma, scale=1.0)
        assert log_prior(p, free) - log_prior(p, fixed) == pytest.approx(
            float(expected_gap), rel=1e-12
        )

    def test_marginal_beta_prior_is_proper(self):
        # With gamma fixed, integrate the scale mixture both over phi and over beta.
        from scipy import integrate

        gamma = 0.7

        def marginal(beta):
            value, _ = integrate.quad(
                lambda phi: stats.norm.pdf(beta, scale=phi) * stats.halfcauchy.pdf(phi, scale=gamma),
                0.0, np.inf, limit=200,
            )
            return value

        total, _ = integrate.quad(marginal, 0.0, np.inf, limit=200)
        assert 2.0 * total == pytest.approx(1.0, abs=1e-6)


class TestLogPosterior:
    def test_decomposes_into_prior_plus_likelihood(self, rng):
        config = ModelConfig(instrument_count=3)
        p = random_parameter_set(rng, 3)
        data = simulate_from_params(rng, p, n=15)
        assert log_posterior(p, data, config) == pytest.approx(
            log_prior(p, config) + log_likelihood(p, data, config), rel=1e-14
        )

    def test_out_of_support_short_circuits(self, rng):
        config = ModelConfig(instrument_count=1)
        data = simulate_from_params(rng, unit_params(), n=5)
        assert log_posterior(unit_params(omega_x=-60.0), data, config) == -math.inf


class TestTransforms:
    @pytest.mark.parametrize("interaction", [False, True])
    def test_round_trip(self, rng, interaction):
        config = ModelConfig(instrument_count=6, interaction_enabled=interaction)
        for _ in range(100):
            p = random_parameter_set(rng, 6, interaction=interaction)
            q = to_constrained(to_unconstrained(p, config), config)
            for key, value in _asdict(p).items():
                np.testing.assert_allclose(
                    getattr(q, key), value, rtol=1e-12, atol=1e-12, err_msg=key
                )

    def test_unit_sigma_maps_to_zero(self):
        config = ModelConfig(instrument_count=1)
        u = to_unconstrained(unit_params(), config)
        layout = UnconstrainedPosterior(
            MRDataset(np.zeros((2, 1)), [0.0, 0.0], [0.0, 0.0]), config
        ).layout
        assert u[layout.i_log_sigma_x] == 0.0
        assert u[layout.i_log_sigma_y] == 0.0

    def test_midpoint_of_bounds_maps_to_zero(self):
        config = ModelConfig(instrument_count=1, bounds={"theta": (0.0, 1.0)})
        u = to_unconstrained(unit_params(theta=0.5), config)
        layout = UnconstrainedPosterior(
            MRDataset(np.zeros((2, 1)), [0.0, 0.0], [0.0, 0.0]), config
        ).layout
        assert u[layout.i_theta] == pytest.approx(0.0, abs=1e-15)

    def test_rejects_out_of_support_point(self):
        config = ModelConfig(instrument_count=1)
        with pytest.raises(ValueError):
            to_unconstrained(unit_params(theta=55.0), config)

    def test_constrain_draws_matches_pointwise_map(self, rng):
        config = ModelConfig(instrument_count=4, interaction_enabled=True)
        layout = ParameterLayout(config)
        draws = rng.normal(size=(7, layout.dim))
        table = constrain_draws(draws, config)
        for row in range(7):
            p = to_constrained(draws[row], config)
            by_name = dict(zip(layout.names, table[row]))
            assert by_name["omega_x"] == pytest.approx(p.omega_x, rel=1e-14)
            assert by_name["sigma_y"] == pytest.approx(p.sigma_y, rel=1e-14)
            assert by_name["gamma"] == pytest.approx(p.gamma, rel=1e-14)
            np.testing.assert_allclose(
                [by_name[f"beta_{k}"] for k in range(1, 5)], p.beta, rtol=1e-14
            )
            np.testing.assert_allclose(
                [by_name[f"phi_{k}"] for k in range(1, 5)], p.phi, rtol=1e-14
            )


class TestUnconstrainedPosterior:
    @pytest.mark.parametrize("interaction", [False, True])
    def test_value_decomposition(self, rng, interaction):
        config = ModelConfig(instrument_count=4, interaction_enabled=interaction)
        p = random_parameter_set(rng, 4, interaction=interaction)
        data = simulate_from_params(rng, p, n=30, interaction=interaction)
        post = UnconstrainedPosterior(data, config)
        u = to_unconstrained(p, config)
        value, _ = post.value_and_grad(u)
        expected = (log_likelihood(p, data, config) + log_prior(p, config)
                    + post.log_abs_det_jacobian(u))
        assert value == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("interaction", [False, True])
    def test_gradient_matches_finite_differences(self, rng, interaction):
        config = gradient_check_config(4, interaction)
        p = random_parameter_set(rng, 4, interaction=interaction)
        data = simulate_from_params(rng, p, n=40, interaction=interaction)
        post = UnconstrainedPosterior(data, config)
        for _ in range(10):
            u = jittered_state(rng, post, p)
            _, grad = post.value_and_grad(u)
            fd = central_difference_gradient(lambda q: post.value(q), u)
            scale = np.maximum(np.abs(grad), np.abs(fd))
            assert np.all(np.abs(grad - fd) <= np.maximum(1e-8, 1e-6 * scale))

    def test_gradient_with_fixed_global_scale(self, rng):
        config = gradient_check_config(3, global_scale_fixed=0.8)
        p = random_parameter_set(rng, 3)
        data = simulate_from_params(rng, p, n=25)
        post = UnconstrainedPosterior(data, config)
        u = jittered_state(rng, post, p)
        _, grad = post.value_and_grad(u)
        fd = central_difference_gradient(lambda q: post.value(q), u)
        scale = np.maximum(np.abs(grad), np.abs(fd))
        assert np.all(np.abs(grad - fd) <= np.maximum(1e-8, 1e-6 * scale))

    def test_out_of_support_returns_minus_inf_and_zero_gradient(self, rng):
        config = ModelConfig(instrument_count=2)
        data = simulate_from_params(rng, random_parameter_set(rng, 2), n=10)
        post = UnconstrainedPosterior(data, config)
        u = np.zeros(post.dim)
        u[post.layout.i_log_sigma_x] = math.log(60.0)  # above the sigma_x upper bound
        value, grad = post.value_and_grad(u)
        assert value == -math.inf
        assert np.all(grad == 0.0)

    def test_reduced_form_slope_of_exposure(self, rng):
        # Regressing Y on (1, X, Z) in a large simulated sample recovers
        # theta + lam / tau_x^2, the conditional-normal coefficient of X.
        p = unit_params(
            j=3, theta=0.4, alpha=np.array([0.5, -0.3, 0.2]), beta=np.array([0.1, 0.05, -0.2]),
            delta_x=0.6, delta_y=-0.5, sigma_x=0.8, sigma_y=0.7,
            omega_x=1.0, omega_y=-2.0,
        )
        n = 1_000_000
        data = simulate_from_params(rng, p, n=n)
        design = np.column_stack([np.ones(n), data.exposure, data.genotypes])
        coef, _, _, _ = np.linalg.lstsq(design, data.outcome, rcond=None)
        resid = data.outcome - design @ coef
        sigma2 = resid @ resid / (n - design.shape[1])
        cov = sigma2 * np.linalg.inv(design.T @ design)
        se_x = math.sqrt(cov[1, 1])
        tau_x_sq = p.delta_x ** 2 + p.sigma_x ** 2
        lam = p.delta_x * p.delta_y
        expected = p.theta + lam / tau_x_sq
        assert abs(coef[1] - expected) <= 3.0 * se_x


class TestDerivedQuantities:
    def test_shrinkage_weight_values(self):
        assert shrinkage_weights(1.0) == pytest.approx(0.5)
        assert shrinkage_weights(3.0) == pytest.approx(0.1)
        assert shrinkage_weights(0.0) == pytest.approx(1.0)
        assert shrinkage_weights(1e8) == pytest.approx(0.0, abs=1e-15)

    @given(st.floats(min_value=1e-3, max_value=1e3),
           st.floats(min_value=1e-3, max_value=1e3))
    def test_shrinkage_weight_monotone_decreasing(self, a, b):
        lo, hi = sorted([a, b])
        assert shrinkage_weights(hi) <= shrinkage_weights(lo)
        assert 0.0 < shrinkage_weights(lo) <= 1.0

    def test_theta_prime_is_sum(self):
        p = unit_params(theta=0.34, psi_yxw=-0.14)
        assert derived_theta_prime(p) == pytest.approx(0.2)

    def test_theta_prime_without_interaction_equals_theta(self):
        p = unit_params(theta=0.27)
        assert derived_theta_prime(p) == pytest.approx(0.27)


class TestParameterSetValidation:
    def test_rejects_nonpositive_scales(self):
        with pytest.raises(ValueError):
            unit_params(sigma_x=0.0)
        with pytest.raises(ValueError):
            unit_params(phi=np.array([-1.0]))
        with pytest.raises(ValueError):
            unit_params(gamma=0.0)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            ParameterSet(
                omega_x=0, omega_y=0, theta=0, alpha=np.zeros(2), beta=np.zeros(3),
                delta_x=0, delta_y=0, sigma_x=1, sigma_y=1, phi=np.ones(2),
                gamma=1, mu_alpha=0, sigma_alpha=1,
            )

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            unit_params(omega_x=math.nan)


class TestModelConfigValidation:
    def test_rejects_unknown_bounds_key(self):
        with pytest.raises(ValueError):
            ModelConfig(instrument_count=2, bounds={"nonsense": (0, 1)})

    def test_rejects_inverted_bounds(self):
        with pytest.raises(ValueError):
            ModelConfig(instrument_count=2, bounds={"theta": (1.0, -1.0)})

    def test_rejects_negative_scale_lower_bound(self):
        with pytest.raises(ValueError):
            ModelConfig(instrument_count=2, bounds={"sigma_x": (-1.0, 2.0)})

    def test_rejects_zero_instruments(self):
        with pytest.raises(ValueError):
            ModelConfig(instrument_count=0)
