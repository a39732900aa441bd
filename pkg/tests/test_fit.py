"""Tests for the draw store and the end-to-end fitting pipeline."""

import csv
import json
import math

import numpy as np
import pytest

from bayesmr.draws import DrawStore
from bayesmr.fit import run_chains
from bayesmr.hmc import ChainRun, HMCConfig
from bayesmr.model import ModelConfig, ParameterLayout

from conftest import simulate_from_params
from test_initializers import pleiotropy_free_params


def synthetic_runs(config: ModelConfig, n_draws=60, n_chains=2, seed=0, spread=0.4):
    """ChainRun stand-ins with random finite unconstrained positions."""
    rng = np.random.default_rng(seed)
    layout = ParameterLayout(config)
    runs = []
    for _ in range(n_chains):
        positions = rng.normal(0.0, spread, size=(n_draws, layout.dim))
        runs.append(ChainRun(
            positions=positions,
            log_posterior=rng.normal(-50.0, 1.0, size=n_draws),
            divergent=np.zeros(n_draws, dtype=bool),
            accept_stats=rng.uniform(0.7, 1.0, size=n_draws),
            step_size=0.1,
            mass_diag=np.ones(layout.dim),
            aborted=False,
        ))
    return runs


def small_hmc_config(**kwargs):
    defaults = dict(chain_count=2, warmup_draws=60, sampling_draws=60,
                    max_leapfrog_steps=32, seed=5)
    defaults.update(kwargs)
    return HMCConfig(**defaults)


class TestDrawStore:
    def setup_method(self):
        self.config = ModelConfig(instrument_count=3)
        self.runs = synthetic_runs(self.config)
        self.store = DrawStore(self.runs, self.config, small_hmc_config())

    def test_shapes_and_names(self):
        layout = ParameterLayout(self.config)
        assert self.store.draw_counts() == [60, 60]
        assert len(self.store.names) == layout.dim
        for table in self.store.tables:
            assert table.shape == (60, layout.dim)
        assert self.store.stacked("theta").shape == (120,)
        assert self.store.per_chain("theta").shape == (2, 60)

    def test_parameter_set_matches_table_row(self):
        params = self.store.parameter_set(1, 7)
        i_theta = self.store.names.index("theta")
        assert params.theta == self.store.tables[1][7, i_theta]
        i_phi2 = self.store.names.index("phi_2")
        assert params.phi[1] == self.store.tables[1][7, i_phi2]

    def test_kappa_definition(self):
        phi_cols = [self.store.names.index(f"phi_{k}") for k in (1, 2, 3)]
        expected = 1.0 / (1.0 + self.store.tables[0][:, phi_cols] ** 2)
        np.testing.assert_array_equal(self.store.kappa[0], expected)
        assert np.all(self.store.kappa_mean() > 0.0)
        assert np.all(self.store.kappa_mean() < 1.0)

    def test_theta_prime_requires_interaction(self):
        with pytest.raises(KeyError):
            self.store.stacked("theta_prime")
        derived = self.store.summary()["derived"]
        assert "theta_prime" not in derived
        assert set(derived) == {"tau_x", "tau_y", "lambda"}

    def test_identified_combinations(self):
        i_dx = self.store.names.index("delta_x")
        i_sx = self.store.names.index("sigma_x")
        table = self.store.tables[0]
        np.testing.assert_array_equal(
            self.store.identified["tau_x"][0],
            np.sqrt(table[:, i_dx] ** 2 + table[:, i_sx] ** 2))
        # the reliability verdict quantifies over identified combinations, not
        # the prior-flat raw coordinates
        gate = self.store.gate_names()
        assert "lambda" in gate and "tau_y" in gate
        assert "delta_x" not in gate and "sigma_y" not in gate
        assert "theta" in gate

    def test_summary_entries(self):
        summary = self.store.summary()
        assert summary["interval_mass"] == 0.95
        for name in self.store.names:
            entry = summary["parameters"][name]
            assert entry["ci_low"] < entry["ci_high"]
            assert entry["sd"] >= 0.0
            assert entry["rhat"] is not None
            assert entry["ess"] is not None
        sampler = summary["sampler"]
        assert sampler["reliable"] is True
        assert sampler["aborted_chains"] == []
        assert sampler["draw_counts"] == [60, 60]

    def test_aborted_chain_flags_unreliable(self):
        runs = synthetic_runs(self.config)
        truncated = ChainRun(
            positions=runs[1].positions[:10], log_posterior=runs[1].log_posterior[:10],
            divergent=np.ones(10, dtype=bool), accept_stats=runs[1].accept_stats[:10],
            step_size=0.1, mass_diag=runs[1].mass_diag, aborted=True,
        )
        store = DrawStore([runs[0], truncated], self.config, small_hmc_config())
        assert not store.reliable
        assert store.aborted_chains == [1]
        assert store.draw_counts() == [60, 10]
        assert store.summary()["sampler"]["reliable"] is False

    def test_constant_disagreeing_chains_report_huge_rhat(self):
        layout = ParameterLayout(self.config)
        runs = []
        for value in (0.0, 1.0):
            positions = np.full((20, layout.dim), value)
            runs.append(ChainRun(
                positions=positions, log_posterior=np.zeros(20),
                divergent=np.zeros(20, dtype=bool), accept_stats=np.ones(20),
                step_size=0.1, mass_diag=np.ones(layout.dim), aborted=False))
        store = DrawStore(runs, self.config, small_hmc_config())
        assert math.isinf(store.max_rhat())
        assert store.summary()["sampler"]["max_rhat"] == 1e308

    def test_interval_mass_validation(self):
        with pytest.raises(ValueError):
            DrawStore(self.runs, self.config, small_hmc_config(), interval_mass=1.0)
        with pytest.raises(ValueError):
            DrawStore([], self.config, small_hmc_config())


class TestArtifacts:
    def setup_method(self):
        self.config = ModelConfig(instrument_count=3, interaction_enabled=True)
        self.runs = synthetic_runs(self.config, n_draws=25, seed=3)
        self.store = DrawStore(self.runs, self.config, small_hmc_config())

    def test_draws_csv_round_trip(self, tmp_path):
        path = tmp_path / "draws.csv"
        self.store.write_draws_csv(path)
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 50
        # exact float round-trip and bit-for-bit recomputable derived column
        for row in rows:
            c, i = int(row["chain"]), int(row["draw"])
            i_theta = self.store.names.index("theta")
            assert float(row["theta"]) == self.store.tables[c][i, i_theta]
            assert float(row["theta_prime"]) == float(row["theta"]) + float(row["psi_yxw"])
            assert row["divergent"] in ("0", "1")
            assert float(row["log_posterior"]) == self.store.chain_runs[c].log_posterior[i]

    def test_csv_kappa_recomputable(self, tmp_path):
        path = tmp_path / "draws.csv"
        self.store.write_draws_csv(path)
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        phi = np.array([[float(r[f"phi_{k}"]) for k in (1, 2, 3)] for r in rows[:25]])
        np.testing.assert_array_equal(1.0 / (1.0 + phi**2), self.store.kappa[0])

    def test_summary_json_round_trip(self, tmp_path):
        path = tmp_path / "summary.json"
        self.store.write_summary_json(path)
        with path.open() as fh:
            loaded = json.load(fh)
        assert loaded == self.store.summary()
        assert "theta_prime" in loaded["derived"]

    def test_kappa_csv(self, tmp_path):
        path = tmp_path / "kappa.csv"
        self.store.write_kappa_csv(path)
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        assert [r["instrument"] for r in rows] == ["1", "2", "3"]
        means = self.store.kappa_mean()
        for k, row in enumerate(rows):
            assert float(row["kappa_mean"]) == means[k]
            assert float(row["kappa_q025"]) <= float(row["kappa_median"]) <= float(row["kappa_q975"])


@pytest.fixture(scope="module")
def fitted_store():
    rng = np.random.default_rng(42)
    params = pleiotropy_free_params(5, rng)
    dataset = simulate_from_params(rng, params, 120)
    config = ModelConfig(instrument_count=5)
    hmc = HMCConfig(chain_count=2, warmup_draws=200, sampling_draws=150,
                    max_leapfrog_steps=48, seed=9)
    return dataset, config, hmc, run_chains(dataset, config, hmc)


class TestRunChains:
    def test_store_is_complete(self, fitted_store):
        _, config, hmc, store = fitted_store
        assert store.draw_counts() == [150, 150]
        assert store.n_chains == 2
        summary = store.summary()
        assert set(summary["parameters"]) == set(store.names)
        theta = summary["parameters"]["theta"]
        assert theta["ci_low"] < theta["mean"] < theta["ci_high"]

    def test_log_posterior_matches_positions(self, fitted_store):
        dataset, config, _, store = fitted_store
        from bayesmr.model import UnconstrainedPosterior

        posterior = UnconstrainedPosterior(dataset, config)
        run = store.chain_runs[0]
        value, _ = posterior.value_and_grad(run.positions[3])
        assert value == run.log_posterior[3]

    def test_deterministic_artifacts(self, fitted_store, tmp_path):
        dataset, config, hmc, store = fitted_store
        again = run_chains(dataset, config, hmc)
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        store.write_draws_csv(first)
        again.write_draws_csv(second)
        assert first.read_bytes() == second.read_bytes()

    def test_init_method_validation(self, fitted_store):
        dataset, config, hmc, _ = fitted_store
        with pytest.raises(ValueError, match="init method"):
            run_chains(dataset, config, hmc, init="nope")

    def test_origin_init_smoke(self, fitted_store):
        dataset, config, _, _ = fitted_store
        hmc = HMCConfig(chain_count=2, warmup_draws=80, sampling_draws=40,
                        max_leapfrog_steps=32, seed=2)
        store = run_chains(dataset, config, hmc, init="origin")
        assert store.draw_counts() == [40, 40]

    def test_vi_init_smoke(self, fitted_store):
        dataset, config, _, _ = fitted_store
        hmc = HMCConfig(chain_count=2, warmup_draws=80, sampling_draws=40,
                        max_leapfrog_steps=32, seed=2)
        store = run_chains(dataset, config, hmc, init="vi")
        assert store.draw_counts() == [40, 40]
