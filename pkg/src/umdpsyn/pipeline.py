"""Batch pipeline: abstract -> product -> synthesize -> simulate -> export.

Every stage writes its artifact under the configured output directory with
a content hash of the upstream configuration; rerunning skips stages whose
hash matches, so changing a synthesis tolerance does not rebuild the
abstraction.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import noise as noise_mod
from .abstraction import Mode, UmdpAbstraction, build_abstraction, simplify
from .automata import Dfa, ProductUmdp, build_product, load_builtin_dfa, load_dfa, \
    safety_counter_dfa
from .config import RunConfig, build_model, build_partition
from .errors import ConfigError, ParseError
from .geometry import Partition
from .models import DynamicsModel
from .simulate import simulate, sweep_initial_states
from .synthesis import SynthesisResult, Unbounded, refine_strategy, \
    robust_value_iteration

BUILTIN_DFAS = ("phi1", "phi2", "phi3")


def _hash_of(parts: list) -> str:
    digest = hashlib.sha256()
    for part in parts:
        if isinstance(part, bytes):
            digest.update(part)
        else:
            digest.update(json.dumps(part, sort_keys=True, default=str).encode())
    return digest.hexdigest()[:16]


def _stamp(path: str, key: str) -> bool:
    if not os.path.exists(path):
        return False
    try:
        with open(path) as fh:
            return fh.read().strip() == key
    except OSError:
        return False


def _write_stamp(path: str, key: str):
    with open(path, "w") as fh:
        fh.write(key)


@dataclass
class PipelineArtifacts:
    partition: Partition
    model: DynamicsModel
    dfa: Dfa
    abstraction: UmdpAbstraction
    product: ProductUmdp
    result: SynthesisResult
    summary: dict
    paths: dict


def resolve_dfa(cfg: RunConfig) -> Dfa:
    name = cfg.spec["dfa"]
    if name in BUILTIN_DFAS:
        if name == "phi3" and cfg.spec.get("horizon", 15) != 15:
            return safety_counter_dfa(int(cfg.spec["horizon"]))
        return load_builtin_dfa(name)
    return load_dfa(name)


def ensure_samples(cfg: RunConfig, model: DynamicsModel, outdir: str) -> str:
    """Return the sample CSV path, generating from the ground truth if asked."""
    spec = cfg.noise["samples"]
    if isinstance(spec, str):
        return spec
    if not isinstance(spec, dict) or "generate" not in spec:
        raise ConfigError("noise.samples: expected a CSV path or {\"generate\": N}")
    n = int(spec["generate"])
    seed = int(cfg.noise.get("seed", 0))
    path = os.path.join(outdir, f"samples-n{n}-seed{seed}.csv")
    if not os.path.exists(path):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 0xA11CE)))
        noise_mod.save_samples(path, model.sample_noise(rng, n))
    return path


def stage_abstract(cfg: RunConfig, partition: Partition, model: DynamicsModel,
                   outdir: str, timings: dict) -> UmdpAbstraction:
    sample_path = ensure_samples(cfg, model, outdir)
    if not os.path.exists(sample_path):
        raise ParseError(f"sample file not found: {sample_path}")
    with open(sample_path, "rb") as fh:
        sample_hash = hashlib.sha256(fh.read()).hexdigest()[:16]
    key = _hash_of([cfg.model, cfg.partition,
                    {k: v for k, v in cfg.noise.items() if k != "samples"},
                    sample_hash])
    art = os.path.join(outdir, "abstraction.npz")
    stamp = os.path.join(outdir, "abstraction.hash")
    if os.path.exists(art) and _stamp(stamp, key):
        timings["abstraction_minutes"] = 0.0
        timings["abstraction_cached"] = True
        return UmdpAbstraction.load(art)
    t0 = time.perf_counter()
    samples = noise_mod.load_samples(sample_path, model.noise_dim)
    nm = noise_mod.build_noise_model(
        samples,
        target_clusters=int(cfg.noise.get("n_clusters", 32)),
        eps_c=noise_mod.resolve_eps_c(cfg.noise["eps_c"], float(cfg.noise["beta_c"]),
                                      len(samples)),
        beta_c=float(cfg.noise["beta_c"]),
        seed=int(cfg.noise.get("seed", 0)),
    )
    mode = Mode(cfg.synthesis.get("mode", "full"))
    ab = build_abstraction(partition, model, nm, mode=mode, alpha=float(cfg.noise["alpha"]))
    ab.save(art)
    _write_stamp(stamp, key)
    timings["abstraction_minutes"] = (time.perf_counter() - t0) / 60.0
    return ab


def stage_synthesize(cfg: RunConfig, partition: Partition, ab: UmdpAbstraction,
                     dfa: Dfa, outdir: str, timings: dict):
    t0 = time.perf_counter()
    simplified = ab if ab.simplified else simplify(ab)
    product = build_product(simplified, partition, dfa)
    horizon_cfg = cfg.spec.get("horizon")
    horizon = Unbounded(tol=float(cfg.synthesis.get("tol", 1e-6)),
                        max_iters=int(cfg.synthesis.get("max_iters", 10_000)))
    result = robust_value_iteration(
        product, horizon=horizon,
        adversary=cfg.synthesis.get("adversary", "two-layer"))
    timings["synthesis_minutes"] = (time.perf_counter() - t0) / 60.0

    lift = product.lift
    safe_cells = np.arange(partition.n_cells)
    p_lower = result.lower.values[lift[safe_cells]]
    p_upper = result.upper.values[lift[safe_cells]]
    result.e_avg = float(np.mean(p_upper - p_lower))
    result.timings = dict(timings)
    if horizon_cfg is not None:
        result.timings["horizon"] = int(horizon_cfg)
    return product, result


def export_results(cfg: RunConfig, partition: Partition, product: ProductUmdp,
                   result: SynthesisResult, outdir: str) -> dict:
    paths = {
        "results_csv": os.path.join(outdir, "results.csv"),
        "summary_json": os.path.join(outdir, "summary.json"),
        "strategy": os.path.join(outdir, "strategy.npz"),
    }
    lift = product.lift
    lo, hi = partition.cell_bounds()
    dim = partition.dim
    with open(paths["results_csv"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["state_index"]
            + [f"region_lower_{d}" for d in range(dim)]
            + [f"region_upper_{d}" for d in range(dim)]
            + ["p_lower", "p_upper", "action"])
        for s in range(partition.n_cells):
            node = lift[s]
            writer.writerow(
                [s] + [repr(float(v)) for v in lo[s]] + [repr(float(v)) for v in hi[s]]
                + [repr(float(result.lower.values[node])),
                   repr(float(result.upper.values[node])),
                   int(result.strategy.actions[node])])
    ab = product.abstraction
    summary = {
        "alpha": ab.ledger.alpha,
        "beta": ab.ledger.beta,
        "beta_c": ab.ledger.beta_c,
        "n_learn": ab.ledger.n_learn,
        "epsilon": ab.epsilon,
        "eps_c": ab.eps_c,
        "mode": ab.mode.value,
        "n_states": ab.n_states,
        "n_actions": ab.n_actions,
        "n_product_nodes": product.n_nodes,
        "e_avg": result.e_avg,
        "e_avg_note": "mean over safe cells of p_upper - p_lower; p_upper uses "
                      "the optimistic adversary (max over actions and over the "
                      "uncertainty set)",
        "iterations": result.lower.iterations,
        "residual": result.lower.residual,
        "converged": result.lower.converged,
        "timings": result.timings,
    }
    with open(paths["summary_json"], "w") as fh:
        json.dump(summary, fh, indent=1)
    np.savez_compressed(
        paths["strategy"],
        actions=result.strategy.actions,
        p_lower=result.lower.values,
        p_upper=result.upper.values,
        prod_s=product.prod_s, prod_z=product.prod_z, lift=product.lift)
    return paths, summary


def stage_simulate(cfg: RunConfig, partition: Partition, model: DynamicsModel,
                   dfa: Dfa, result: SynthesisResult, outdir: str,
                   timings: dict) -> str:
    sim = cfg.simulation
    episodes = int(sim.get("episodes", 500))
    seed = int(sim.get("seed", 0))
    max_steps = sim.get("max_steps")
    if max_steps is None:
        max_steps = max(10, 10 * result.lower.iterations)
    controller = refine_strategy(result, partition, dfa)
    n_cells = partition.n_cells
    wanted = sim.get("sampled_cells", 30)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 0xCE11)))
    if wanted == "all" or int(wanted) >= n_cells:
        cells = np.arange(n_cells)
    else:
        cells = np.sort(rng.choice(n_cells, size=int(wanted), replace=False))
    t0 = time.perf_counter()
    rows = sweep_initial_states(controller, model, dfa, cells, episodes,
                                int(max_steps), seed=seed)
    timings["simulation_minutes"] = (time.perf_counter() - t0) / 60.0
    path = os.path.join(outdir, "sweep.csv")
    dim = partition.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell_index"] + [f"x_center_{d}" for d in range(dim)]
                        + ["p_lower", "empirical", "ci_low", "ci_high"])
        for row in rows:
            writer.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
    return path


def export_trajectories(controller, model: DynamicsModel, dfa: Dfa, x0_list,
                        max_steps: int, outdir: str, seed: int = 0) -> list[str]:
    """One closed-loop episode per start state, one CSV per episode."""
    paths = []
    dim = model.state_dim
    for k, x0 in enumerate(x0_list):
        _, _, records = simulate(controller, model, np.asarray(x0, dtype=float),
                                 max_steps, 1, dfa, seed=seed + k)
        rec = records[0]
        path = os.path.join(outdir, f"trajectory_{k:03d}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x_{d}" for d in range(dim)] + ["action", "accepted"])
            for t, state in enumerate(rec.states):
                action = rec.actions[t] if t < len(rec.actions) else ""
                writer.writerow([repr(float(v)) for v in state] + [action, int(rec.accepted)])
        paths.append(path)
    return paths


def run_pipeline(cfg: RunConfig, simulate_stage: bool = True,
                 trajectories: int = 0) -> PipelineArtifacts:
    outdir = cfg.output
    os.makedirs(outdir, exist_ok=True)
    timings: dict = {}
    partition = build_partition(cfg)
    model = build_model(cfg)
    dfa = resolve_dfa(cfg)
    ab = stage_abstract(cfg, partition, model, outdir, timings)
    product, result = stage_synthesize(cfg, partition, ab, dfa, outdir, timings)
    paths, summary = export_results(cfg, partition, product, result, outdir)
    if simulate_stage:
        paths["sweep_csv"] = stage_simulate(cfg, partition, model, dfa, result,
                                            outdir, timings)
        summary["timings"] = dict(result.timings, **{
            k: v for k, v in timings.items() if k.startswith("simulation")})
        with open(paths["summary_json"], "w") as fh:
            json.dump(summary, fh, indent=1)
    if trajectories > 0:
        controller = refine_strategy(result, partition, dfa)
        rng = np.random.default_rng(np.random.SeedSequence(
            entropy=(int(cfg.simulation.get("seed", 0)), 0x7A7)))
        starts = [partition.cell_centers()[rng.integers(partition.n_cells)]
                  for _ in range(trajectories)]
        paths["trajectories"] = export_trajectories(
            controller, model, dfa, starts,
            int(cfg.simulation.get("max_steps") or max(10, 10 * result.lower.iterations)),
            outdir, seed=int(cfg.simulation.get("seed", 0)))
    if not result.lower.converged:
        raise ArithmeticError(
            f"value iteration did not converge (residual {result.lower.residual:.3e})")
    return PipelineArtifacts(partition=partition, model=model, dfa=dfa,
                             abstraction=ab, product=product, result=result,
                             summary=summary, paths=paths)
