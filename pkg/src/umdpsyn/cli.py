"""Command-line driver for the abstraction/synthesis/validation pipeline."""

from __future__ import annotations

import json
import sys

import click

from .errors import ConfigError, UmdpsynError

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _load_cfg(config, preset, overrides):
    from .config import apply_overrides, load_config, parse_config, preset_config

    if (config is None) == (preset is None):
        raise ConfigError("give exactly one of --config PATH or --preset NAME")
    if preset is not None:
        return preset_config(preset, **overrides)
    cfg = load_config(config)
    from dataclasses import asdict
    return parse_config(apply_overrides(asdict(cfg), overrides))


def _common_options(fn):
    fn = click.option("--config", type=click.Path(), default=None,
                      help="JSON run configuration")(fn)
    fn = click.option("--preset", default=None,
                      help="built-in benchmark configuration")(fn)
    fn = click.option("--n-samples", type=int, default=None,
                      help="generate this many disturbance samples")(fn)
    fn = click.option("--samples", type=click.Path(), default=None,
                      help="CSV of disturbance samples")(fn)
    fn = click.option("--mode", default=None,
                      type=click.Choice(["full", "support-only-imdp", "naive-imdp"]))(fn)
    fn = click.option("--adversary", default=None,
                      type=click.Choice(["two-layer", "lp"]))(fn)
    fn = click.option("--n-clusters", type=int, default=None)(fn)
    fn = click.option("--alpha", type=float, default=None)(fn)
    fn = click.option("--cells", type=int, default=None,
                      help="cells per dimension (overrides the grid)")(fn)
    fn = click.option("--seed", type=int, default=None)(fn)
    fn = click.option("--output", type=click.Path(), default=None)(fn)
    return fn


def _collect(kwargs):
    return {k: kwargs.pop(k) for k in
            ("n_samples", "samples", "mode", "adversary", "n_clusters",
             "alpha", "cells", "seed", "output")}


@click.group()
def main():
    """Data-driven UMDP abstraction and robust strategy synthesis."""


def _run_guarded(fn):
    try:
        fn()
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (UmdpsynError, ArithmeticError, AssertionError) as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)


@main.command()
@_common_options
def abstract(config, preset, **kwargs):
    """Build and export the UMDP abstraction."""
    overrides = _collect(kwargs)

    def run():
        import os
        from .config import build_model, build_partition
        from .pipeline import stage_abstract

        cfg = _load_cfg(config, preset, overrides)
        os.makedirs(cfg.output, exist_ok=True)
        timings = {}
        partition = build_partition(cfg)
        model = build_model(cfg)
        ab = stage_abstract(cfg, partition, model, cfg.output, timings)
        click.echo(json.dumps({
            "n_states": ab.n_states, "n_actions": ab.n_actions,
            "mode": ab.mode.value, "epsilon": ab.epsilon,
            "n_learn": ab.ledger.n_learn,
            "abstraction": f"{cfg.output}/abstraction.npz",
            "timings": timings,
        }, indent=1))

    _run_guarded(run)


@main.command()
@_common_options
def synthesize(config, preset, **kwargs):
    """Abstract (cached) and run robust value iteration."""
    overrides = _collect(kwargs)

    def run():
        from .pipeline import run_pipeline

        cfg = _load_cfg(config, preset, overrides)
        artifacts = run_pipeline(cfg, simulate_stage=False)
        click.echo(json.dumps(artifacts.summary, indent=1))

    _run_guarded(run)


@main.command()
@_common_options
@click.option("--episodes", type=int, default=None)
@click.option("--trajectories", type=int, default=0,
              help="also export this many closed-loop trajectory CSVs")
def simulate(config, preset, episodes, trajectories, **kwargs):
    """Full pipeline plus the Monte Carlo validation sweep."""
    overrides = _collect(kwargs)

    def run():
        from .pipeline import run_pipeline

        cfg = _load_cfg(config, preset, overrides)
        if episodes is not None:
            cfg.simulation["episodes"] = episodes
        artifacts = run_pipeline(cfg, simulate_stage=True, trajectories=trajectories)
        click.echo(json.dumps(artifacts.summary, indent=1))

    _run_guarded(run)


@main.command()
@_common_options
@click.option("--trajectories", type=int, default=0)
def run(config, preset, trajectories, **kwargs):
    """Full pipeline: abstract, synthesize, simulate, export."""
    overrides = _collect(kwargs)

    def go():
        from .pipeline import run_pipeline

        cfg = _load_cfg(config, preset, overrides)
        artifacts = run_pipeline(cfg, simulate_stage=True, trajectories=trajectories)
        click.echo(json.dumps(artifacts.summary, indent=1))

    _run_guarded(go)


@main.command()
@click.option("--sizes", default="1000,2000", help="comma-separated post sizes")
@click.option("--seed", type=int, default=0)
@click.option("--reps", type=int, default=50)
@click.option("--synth-states", type=int, default=1600)
@click.option("--synth-actions", type=int, default=8)
def bench(sizes, seed, reps, synth_states, synth_actions):
    """Time the greedy adversary against the LP oracle."""

    def run():
        from .bench import bench_adversary

        report = bench_adversary(
            sizes=tuple(int(s) for s in sizes.split(",")),
            seed=seed, reps=reps,
            synth_states=synth_states, synth_actions=synth_actions)
        click.echo(json.dumps({
            "per_call_seconds": report.per_call,
            "greedy_time_ratio": report.greedy_ratio,
            "synthesis_greedy_seconds": report.synthesis_greedy,
            "synthesis_lp_seconds": report.synthesis_lp,
            "synthesis_speedup": report.synthesis_speedup,
        }, indent=1))

    _run_guarded(run)


if __name__ == "__main__":
    main()
