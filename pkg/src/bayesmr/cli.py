"""Command-line interface: fit a dataset, run a simulation study, or compute the baseline.

Exit codes: 0 success, 2 input error (bad dataset, bad config, bad paths),
3 unreliable inference (a chain hit the divergence budget or split R-hat exceeds
the threshold); artifacts are still written in the unreliable case.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import click

from .baselines import per_snp_regressions, wme_estimate, write_per_snp_csv
from .data import DataFormatError, load_dataset_csv
from .fit import INIT_METHODS, run_chains
from .hmc import HMCConfig
from .metrics import (
    ReplicateEstimate,
    build_scenario_report,
    write_estimates_csv,
    write_kappa_report_csv,
    write_scenario_report_csv,
)
from .model import ModelConfig
from .simulate import ScenarioConfig, generate_replicate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_UNRELIABLE = 3
RHAT_LIMIT = 1.05

_SCENARIO_ID_PATTERN = re.compile(r"^[A-Za-z0-9_.-]+$")


class ConfigError(ValueError):
    """A run configuration that cannot be executed."""


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs beyond the dataset: model, sampler, scenarios, baseline."""

    sampler: HMCConfig = field(default_factory=HMCConfig)
    init: str = "map"
    interval_mass: float = 0.95
    jitter_scale: float = 1.0
    interaction: bool = False
    global_scale: float | None = None
    bounds: dict = field(default_factory=dict)
    scenarios: tuple[ScenarioConfig, ...] = ()
    wme_bootstrap_reps: int = 1000
    wme_confidence_mass: float = 0.95
    wme_seed: int = 0


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _section(config: dict, name: str) -> dict:
    value = config.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return value


def load_run_config(path: str | Path, seed_override: int | None = None) -> RunConfig:
    """Parse and validate a run configuration file; every key must be known."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(raw, {"model", "sampler", "init", "interval_mass", "jitter_scale",
                      "scenarios", "wme"}, "config")

    model = _section(raw, "model")
    _check_keys(model, {"interaction", "global_scale", "bounds"}, "model")
    bounds = model.get("bounds", {})
    if not isinstance(bounds, dict):
        raise ConfigError("model.bounds must be an object of [low, high] pairs")
    bounds = {k: tuple(v) for k, v in bounds.items()}

    sampler_section = _section(raw, "sampler")
    _check_keys(sampler_section, {"chain_count", "warmup_draws", "sampling_draws",
                                  "target_accept", "max_leapfrog_steps", "seed"}, "sampler")

    wme_section = _section(raw, "wme")
    _check_keys(wme_section, {"bootstrap_reps", "confidence_mass", "seed"}, "wme")

    scenario_entries = raw.get("scenarios", [])
    if not isinstance(scenario_entries, list):
        raise ConfigError("scenarios must be a list")

    init = raw.get("init", "map")
    if init not in INIT_METHODS:
        raise ConfigError(f"init must be one of {INIT_METHODS}, got {init!r}")

    try:
        sampler = HMCConfig(**sampler_section)
        scenarios = []
        for k, entry in enumerate(scenario_entries):
            if not isinstance(entry, dict):
                raise ConfigError(f"scenarios[{k}] must be an object")
            _check_keys(entry, {"scenario_id", "pleiotropy", "sample_size", "theta_true",
                                "instrument_count", "pleiotropic_count", "replicates",
                                "seed"}, f"scenarios[{k}]")
            scenarios.append(ScenarioConfig(**entry))
        config = RunConfig(
            sampler=sampler,
            init=init,
            interval_mass=float(raw.get("interval_mass", 0.95)),
            jitter_scale=float(raw.get("jitter_scale", 1.0)),
            interaction=bool(model.get("interaction", False)),
            global_scale=model.get("global_scale"),
            bounds=bounds,
            scenarios=tuple(scenarios),
            wme_bootstrap_reps=int(wme_section.get("bootstrap_reps", 1000)),
            wme_confidence_mass=float(wme_section.get("confidence_mass", 0.95)),
            wme_seed=int(wme_section.get("seed", 0)),
        )
        # surface bad bounds/global_scale now rather than after the dataset loads
        ModelConfig(instrument_count=1, bounds=config.bounds,
                    global_scale_fixed=config.global_scale)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    for scenario in config.scenarios:
        if not _SCENARIO_ID_PATTERN.match(scenario.scenario_id):
            raise ConfigError(
                f"scenario_id {scenario.scenario_id!r} is not filename-safe"
            )
    if not 0.0 < config.interval_mass < 1.0:
        raise ConfigError("interval_mass must be in (0, 1)")
    if not 0.0 < config.wme_confidence_mass < 1.0:
        raise ConfigError("wme.confidence_mass must be in (0, 1)")
    if config.wme_bootstrap_reps < 1:
        raise ConfigError("wme.bootstrap_reps must be >= 1")

    if seed_override is not None:
        config = replace(
            config,
            sampler=replace(config.sampler, seed=seed_override),
            wme_seed=seed_override,
            scenarios=tuple(replace(s, seed=seed_override) for s in config.scenarios),
        )
    return config


def _prepare_out_dir(out_dir: str | Path) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _store_is_reliable(store) -> tuple[bool, str]:
    rhat = store.max_rhat()
    problems = []
    if store.aborted_chains:
        problems.append(f"chains aborted by the divergence budget: {store.aborted_chains}")
    if not rhat <= RHAT_LIMIT:  # nan compares false, which correctly flags it
        problems.append(f"max split R-hat {rhat:.4g} exceeds {RHAT_LIMIT}")
    return (not problems, "; ".join(problems))


def fit_command(dataset_path, config_path, out_dir, seed=None) -> int:
    try:
        config = load_run_config(config_path, seed)
        out = _prepare_out_dir(out_dir)
        dataset = load_dataset_csv(dataset_path)
    except (ConfigError, DataFormatError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INPUT

    if config.interaction and dataset.covariate is None:
        click.echo("error: the interaction model needs a w column in the dataset", err=True)
        return EXIT_INPUT
    if not config.interaction and dataset.covariate is not None:
        click.echo("warning: dataset has a w column but the interaction model is "
                   "disabled; covariate ignored", err=True)
        dataset = dataset.drop_covariate()

    try:
        model_config = ModelConfig(instrument_count=dataset.n_instruments,
                                   interaction_enabled=config.interaction,
                                   bounds=config.bounds,
                                   global_scale_fixed=config.global_scale)
        store = run_chains(dataset, model_config, config.sampler, init=config.init,
                           interval_mass=config.interval_mass,
                           jitter_scale=config.jitter_scale)
        store.write_draws_csv(out / "draws.csv")
        store.write_summary_json(out / "summary.json")
        store.write_kappa_csv(out / "kappa.csv")
        write_per_snp_csv(per_snp_regressions(dataset), out / "per_snp.csv")
    except Exception as exc:  # noqa: BLE001 - surface as an input problem, not a traceback
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_INPUT

    for name in ("draws.csv", "summary.json", "kappa.csv", "per_snp.csv"):
        click.echo(f"wrote {out / name}")
    reliable, why = _store_is_reliable(store)
    if not reliable:
        click.echo(f"warning: inference flagged unreliable ({why}); outputs retained",
                   err=True)
        return EXIT_UNRELIABLE
    return EXIT_OK


def _fit_replicate(scenario: ScenarioConfig, config: RunConfig, r: int) -> dict:
    dataset, truth = generate_replicate(scenario, r)
    model_config = ModelConfig(instrument_count=scenario.instrument_count,
                               interaction_enabled=False,
                               bounds=config.bounds,
                               global_scale_fixed=config.global_scale)
    sampler = replace(config.sampler, seed=config.sampler.seed + r)
    out: dict = {"replicate": r, "truth": truth}
    try:
        store = run_chains(dataset, model_config, sampler, init=config.init,
                           interval_mass=config.interval_mass,
                           jitter_scale=config.jitter_scale)
        theta = store.summary()["parameters"]["theta"]
        out["bayes"] = ReplicateEstimate(replicate=r, estimate=theta["mean"],
                                         ci_low=theta["ci_low"], ci_high=theta["ci_high"])
        out["kappa"] = store.kappa_mean()
    except Exception as exc:  # noqa: BLE001 - fault isolation across replicates
        logger.warning("scenario %s replicate %d: model fit failed: %s",
                       scenario.scenario_id, r, exc)
        out["bayes_error"] = f"{type(exc).__name__}: {exc}"
    try:
        result = wme_estimate(per_snp_regressions(dataset),
                              bootstrap_reps=config.wme_bootstrap_reps,
                              confidence_mass=config.wme_confidence_mass,
                              seed=config.wme_seed + r)
        out["wme"] = ReplicateEstimate(replicate=r, estimate=result.estimate,
                                       ci_low=result.ci_low, ci_high=result.ci_high)
    except Exception as exc:  # noqa: BLE001
        logger.warning("scenario %s replicate %d: baseline failed: %s",
                       scenario.scenario_id, r, exc)
        out["wme_error"] = f"{type(exc).__name__}: {exc}"
    return out


def simulate_command(config_path, out_dir, seed=None, threads=1) -> int:
    try:
        config = load_run_config(config_path, seed)
        if not config.scenarios:
            raise ConfigError("simulate needs a non-empty scenarios list in the config")
        out = _prepare_out_dir(out_dir)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INPUT

    reports = []
    for scenario in config.scenarios:
        indices = range(scenario.replicates)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                rows = list(pool.map(lambda r: _fit_replicate(scenario, config, r), indices))
        else:
            rows = [_fit_replicate(scenario, config, r) for r in indices]

        bayes = [row["bayes"] for row in rows if "bayes" in row]
        wme = [row["wme"] for row in rows if "wme" in row]
        kappa_entries = [(row["replicate"], row["kappa"], row["truth"])
                         for row in rows if "kappa" in row]
        reports.append(build_scenario_report(
            scenario, bayes, wme,
            bayes_failures=sum("bayes_error" in row for row in rows),
            wme_failures=sum("wme_error" in row for row in rows)))
        write_estimates_csv(bayes, out / f"{scenario.scenario_id}_bayes_estimates.csv")
        write_estimates_csv(wme, out / f"{scenario.scenario_id}_wme_estimates.csv")
        write_kappa_report_csv(kappa_entries, out / f"{scenario.scenario_id}_kappa.csv")
        click.echo(f"scenario {scenario.scenario_id}: {len(bayes)}/{scenario.replicates} "
                   f"model fits, {len(wme)}/{scenario.replicates} baseline fits")

    write_scenario_report_csv(reports, out / "report.csv")
    click.echo(f"wrote {out / 'report.csv'}")
    return EXIT_OK


def wme_command(dataset_path, out_path, seed=0, bootstrap_reps=1000) -> int:
    try:
        dataset = load_dataset_csv(dataset_path)
        stats = per_snp_regressions(dataset)
        result = wme_estimate(stats, bootstrap_reps=bootstrap_reps, seed=seed)
    except (DataFormatError, OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INPUT

    def jf(v):
        v = float(v)
        return v if math.isfinite(v) else None

    used = set(int(k) for k in result.used)
    position = {k: i for i, k in enumerate(result.used)}
    instruments = []
    for k in range(stats.n_instruments):
        entry = {
            "instrument": f"z{k + 1}",
            "b_x": jf(stats.b_x[k]), "se_x": jf(stats.se_x[k]),
            "b_y": jf(stats.b_y[k]), "se_y": jf(stats.se_y[k]),
            "used": k in used,
            "ratio": jf(result.ratios[position[k]]) if k in used else None,
            "weight": jf(result.weights[position[k]]) if k in used else None,
        }
        instruments.append(entry)
    payload = {
        "estimate": jf(result.estimate),
        "ci_low": jf(result.ci_low),
        "ci_high": jf(result.ci_high),
        "confidence_mass": 0.95,
        "bootstrap_reps": bootstrap_reps,
        "seed": seed,
        "instruments": instruments,
    }
    out = Path(out_path)
    if out.parent and not out.parent.exists():
        try:
            out.parent.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            click.echo(f"error: cannot create {out.parent}: {exc}", err=True)
            return EXIT_INPUT
    with open(out, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    click.echo(f"wrote {out}")
    return EXIT_OK


@click.group()
def main():
    """Bayesian Mendelian randomization with shrinkage of pleiotropic effects."""


@main.command("fit")
@click.argument("dataset", type=click.Path())
@click.option("--config", "config_path", required=True, type=click.Path(),
              help="Run configuration JSON (model + sampler sections).")
@click.option("--out", "out_dir", default="bayesmr_fit", show_default=True,
              help="Directory for draws.csv, summary.json, kappa.csv, per_snp.csv.")
@click.option("--seed", type=int, default=None, help="Override every seed in the config.")
@click.option("--threads", type=int, default=None,
              help="Unused for a single fit; accepted for interface symmetry.")
def _cli_fit(dataset, config_path, out_dir, seed, threads):
    """Fit the model to a dataset CSV (columns x, y, optional w, z1..zJ)."""
    raise SystemExit(fit_command(dataset, config_path, out_dir, seed))


@main.command("simulate")
@click.option("--config", "config_path", required=True, type=click.Path(),
              help="Run configuration JSON with a scenarios list.")
@click.option("--out", "out_dir", default="bayesmr_sim", show_default=True,
              help="Directory for the report and per-scenario estimate files.")
@click.option("--seed", type=int, default=None, help="Override every seed in the config.")
@click.option("--threads", type=int, default=lambda: os.cpu_count() or 1,
              help="Replicates fitted concurrently. [default: machine core count]")
def _cli_simulate(config_path, out_dir, seed, threads):
    """Run the configured simulation scenarios with both methods and write the report."""
    raise SystemExit(simulate_command(config_path, out_dir, seed, max(1, threads)))


@main.command("wme")
@click.argument("dataset", type=click.Path())
@click.option("--out", "out_path", default="wme.json", show_default=True,
              help="Path of the JSON result.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Bootstrap seed.")
@click.option("--bootstrap-reps", type=int, default=1000, show_default=True,
              help="Bootstrap resamples for the confidence interval.")
@click.option("--threads", type=int, default=None,
              help="Unused for the baseline; accepted for interface symmetry.")
def _cli_wme(dataset, out_path, seed, bootstrap_reps, threads):
    """Weighted-median estimate with a parametric-bootstrap confidence interval."""
    raise SystemExit(wme_command(dataset, out_path, seed, bootstrap_reps))


if __name__ == "__main__":
    main()
