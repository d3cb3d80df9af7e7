"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines as they complete.  Every tolerance is pinned here, not configurable.
"""

import csv
import os
import time

import numpy as np
import pytest
from scipy.stats import truncnorm

from umdpsyn.abstraction import Mode, build_abstraction, simplify
from umdpsyn.automata import build_product
from umdpsyn.bench import bench_adversary, random_feasible_instance
from umdpsyn.config import preset_config
from umdpsyn.noise import build_noise_model, load_samples, resolve_eps_c
from umdpsyn.pipeline import ensure_samples, resolve_dfa, run_pipeline
from umdpsyn.synthesis import (Bounded, Unbounded, gamma_feasible, lp_adversary,
                               model_from_abstraction, o_maximize_2layer,
                               robust_value_iteration)

from conftest import (fold_budget, lp_rdp, random_budget_umdp, toy_affine_model,
                      toy_partition)

OUT = "/tmp/umdpsyn-acceptance"


def report(name: str, ok: bool, detail: str):
    print(f"ACCEPTANCE {'PASS' if ok else 'FAIL'} - {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_a1_adversary_oracle_equivalence():
    """1000 random feasible instances: greedy == LP to 1e-9, feasible to 1e-12."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_gap = 0.0
    worst_feas = True
    for k in range(1000):
        n = int(rng.integers(1, 21))
        bounds, values = random_feasible_instance(rng, n, max_block=4)
        direction = "min" if k % 2 == 0 else "max"
        gamma, obj = o_maximize_2layer(bounds, values, direction)
        _, lp_obj = lp_adversary(bounds, values, direction)
        worst_gap = max(worst_gap, abs(obj - lp_obj))
        worst_feas = worst_feas and gamma_feasible(bounds, gamma, tol=1e-12)
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 1e-9 and worst_feas and elapsed < 60.0
    report("adversary-oracle-equivalence", ok,
           f"worst objective gap {worst_gap:.2e}, all gamma feasible to 1e-12: "
           f"{worst_feas}, {elapsed:.1f}s (< 60s)")


def test_a2_complexity_claim():
    """Greedy scales ~n log n and beats the LP by >= 5x end to end."""
    t0 = time.perf_counter()
    rep = bench_adversary(sizes=(1000, 2000), seed=1, reps=301,
                          synth_states=1600, synth_actions=8, synth_sweeps=6)
    elapsed = time.perf_counter() - t0
    lp_slowdown = min(rep.per_call[s]["lp"] / rep.per_call[s]["greedy"]
                      for s in (1000, 2000))
    ok = (rep.greedy_ratio <= 2.4 and lp_slowdown >= 5.0
          and rep.synthesis_speedup >= 5.0 and elapsed < 600.0)
    report("complexity-claim", ok,
           f"greedy t(2000)/t(1000) = {rep.greedy_ratio:.2f} (<= 2.4), "
           f"LP per-call slowdown >= {lp_slowdown:.0f}x (>= 5x), "
           f"1600-state synthesis speedup {rep.synthesis_speedup:.0f}x (>= 5x), "
           f"{elapsed:.0f}s (< 600s)")


def test_a3_simplification_lemma():
    """Folding the mass budget never raises the robust value (50 UMDPs)."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(31)
    worst = -np.inf
    for _ in range(50):
        n_states = int(rng.integers(5, 13))
        eps_c = float(rng.uniform(0.005, 0.1))
        pairs, trap = random_budget_umdp(rng, n_states, 2, eps_c)
        accepting = np.zeros(n_states, dtype=bool)
        accepting[int(rng.integers(n_states - 1))] = True
        original = lp_rdp(pairs, accepting, n_states, sweeps=12)
        folded = lp_rdp(fold_budget(pairs, trap, eps_c), accepting, n_states,
                        sweeps=12)
        worst = max(worst, float(np.max(folded - original)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 300.0
    report("simplification-lemma", ok,
           f"max p(simplified) - p(original) = {worst:.2e} (<= 1e-9), "
           f"{elapsed:.0f}s (< 300s)")


def test_a4_hoeffding_soundness():
    """Integrated truth lies in every learned interval, 10 seeds x 100 triples."""
    t0 = time.perf_counter()
    model = toy_affine_model()
    part = toy_partition(cells=20)
    clusters = part.coarse_clusters()
    std, bound = 0.1, 0.3
    dist = truncnorm(-bound / std, bound / std, loc=0.0, scale=std)

    def truth(x, a, states):
        drift = float(model.step(x[None, :], a, np.zeros((1, 1)))[0, 0])
        total = 0.0
        for s in states:
            if s == part.unsafe_index:
                total += dist.cdf(part.safe_box.lower[0] - drift)
                total += 1.0 - dist.cdf(part.safe_box.upper[0] - drift)
            else:
                cell = part.cell_box(int(s))
                total += dist.cdf(cell.upper[0] - drift) - dist.cdf(cell.lower[0] - drift)
        return total

    violations = 0
    checks = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        samples = model.sample_noise(rng, 10_000)
        nm = build_noise_model(samples, 24, eps_c=0.01, beta_c=0.01)
        ab = build_abstraction(part, model, nm, Mode.FULL, alpha=0.05)
        for _ in range(100):
            s = int(rng.integers(part.n_cells))
            a = int(rng.integers(model.n_actions))
            cell = part.cell_box(s)
            x = rng.uniform(cell.lower, cell.upper)
            pb = ab.pair_view(s, a)
            k = int(rng.integers(len(pb.succ)))
            p_true = truth(x, a, [int(pb.succ[k])])
            checks += 1
            if not pb.lower[k] - 1e-9 <= p_true <= pb.upper[k] + 1e-9:
                violations += 1
            bl = slice(ab.blk_indptr[s * ab.n_actions + a],
                       ab.blk_indptr[s * ab.n_actions + a + 1])
            if bl.stop > bl.start:
                kq = int(rng.integers(bl.stop - bl.start))
                p_true = truth(x, a, clusters[ab.blk_id[bl][kq]])
                checks += 1
                if not (ab.blk_lower[bl][kq] - 1e-9 <= p_true
                        <= ab.blk_upper[bl][kq] + 1e-9):
                    violations += 1
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 120.0
    report("hoeffding-soundness", ok,
           f"{violations}/{checks} interval violations, {elapsed:.0f}s (< 120s)")


def test_a5_mode_ordering():
    """Naive <= support-only <= full on a shared 20x20 unicycle instance."""
    t0 = time.perf_counter()
    os.makedirs(OUT, exist_ok=True)
    cfg = preset_config("unicycle2d-phi1", cells=20, n_samples=4000,
                        output=os.path.join(OUT, "modes"))
    from umdpsyn.config import build_model, build_partition
    os.makedirs(cfg.output, exist_ok=True)
    part, model, dfa = build_partition(cfg), build_model(cfg), resolve_dfa(cfg)
    samples = load_samples(ensure_samples(cfg, model, cfg.output), 1)
    nm = build_noise_model(samples, 40, resolve_eps_c("auto", 0.01, len(samples)), 0.01)
    stats = {}
    for mode in (Mode.NAIVE, Mode.SUPPORT_ONLY, Mode.FULL):
        ab = build_abstraction(part, model, nm, mode, alpha=0.05)
        prod = build_product(simplify(ab), part, dfa)
        res = robust_value_iteration(prod, horizon=Unbounded(tol=1e-8))
        pl = res.lower.values[prod.lift[: part.n_cells]]
        pu = res.upper.values[prod.lift[: part.n_cells]]
        stats[mode] = (float(pl.mean()), float(np.mean(pu - pl)))
    elapsed = time.perf_counter() - t0
    ordering = (stats[Mode.NAIVE][0] <= stats[Mode.SUPPORT_ONLY][0] + 1e-9
                <= stats[Mode.FULL][0] + 2e-9)
    errors = stats[Mode.NAIVE][1] >= stats[Mode.FULL][1] - 1e-9
    ok = ordering and errors and elapsed < 900.0
    report("mode-ordering", ok,
           f"mean p_lower naive {stats[Mode.NAIVE][0]:.3f} <= support-only "
           f"{stats[Mode.SUPPORT_ONLY][0]:.3f} <= full {stats[Mode.FULL][0]:.3f}; "
           f"e_avg naive {stats[Mode.NAIVE][1]:.3f} >= full {stats[Mode.FULL][1]:.3f}; "
           f"{elapsed:.0f}s (< 900s)")


def test_a6_table_desk_scale():
    """2D unicycle phi2 at 60x60: e_avg <= 0.10 at N=1e4, <= 0.02 at N=1e6."""
    t0 = time.perf_counter()
    cfg = preset_config("unicycle2d-phi2", n_samples=10_000,
                        output=os.path.join(OUT, "u2d-1e4"))
    cfg.simulation["episodes"] = 200
    cfg.simulation["sampled_cells"] = 20
    art_small = run_pipeline(cfg, simulate_stage=True)
    elapsed_small = time.perf_counter() - t0
    cfg = preset_config("unicycle2d-phi2", n_samples=1_000_000,
                        output=os.path.join(OUT, "u2d-1e6"))
    art_large = run_pipeline(cfg, simulate_stage=False)
    elapsed = time.perf_counter() - t0
    e4, e6 = art_small.summary["e_avg"], art_large.summary["e_avg"]
    ok = e4 <= 0.10 and e6 <= 0.02 and elapsed_small < 1200.0
    report("table-desk-scale", ok,
           f"e_avg {e4:.4f} at N=1e4 (<= 0.10), {e6:.4f} at N=1e6 (<= 0.02); "
           f"N=1e4 pipeline {elapsed_small:.0f}s (< 1200s), total {elapsed:.0f}s")


def test_a7_certified_bound_validation():
    """Pendulum: Monte Carlo rates meet the certificate in >= 95% of cells."""
    t0 = time.perf_counter()
    cfg = preset_config("pendulum-phi1", cells=50, n_samples=100_000,
                        output=os.path.join(OUT, "pendulum"))
    cfg.simulation["episodes"] = 1000
    cfg.simulation["sampled_cells"] = 50
    art = run_pipeline(cfg, simulate_stage=True)
    with open(art.paths["sweep_csv"]) as fh:
        rows = list(csv.DictReader(fh))
    validated = 0
    for row in rows:
        emp = float(row["empirical"])
        half = emp - float(row["ci_low"])
        if emp >= float(row["p_lower"]) - half - 1e-12:
            validated += 1
    elapsed = time.perf_counter() - t0
    frac = validated / len(rows)
    nontrivial = sum(1 for r in rows if float(r["p_lower"]) > 0.1)
    ok = frac >= 0.95 and len(rows) == 50 and elapsed < 1800.0
    report("certified-bound-validation", ok,
           f"{validated}/{len(rows)} cells validated ({frac:.0%} >= 95%), "
           f"{nontrivial} cells with certificates above 0.1, "
           f"{elapsed:.0f}s (< 1800s)")


def test_a8_bounded_horizon_cross_check():
    """Heating at 8^4 cells: 15-sweep recursion equals the counter-DFA product."""
    t0 = time.perf_counter()
    cfg = preset_config("heating4-phi3", output=os.path.join(OUT, "heating"))
    from umdpsyn.config import build_model, build_partition
    os.makedirs(cfg.output, exist_ok=True)
    part, model = build_partition(cfg), build_model(cfg)
    samples = load_samples(ensure_samples(cfg, model, cfg.output), 4)
    nm = build_noise_model(samples, int(cfg.noise["n_clusters"]),
                           float(cfg.noise["eps_c"]), float(cfg.noise["beta_c"]))
    ab = simplify(build_abstraction(part, model, nm, Mode.FULL, alpha=0.05))
    dfa = resolve_dfa(cfg)
    prod = build_product(ab, part, dfa)
    res_prod = robust_value_iteration(prod, horizon=Unbounded(tol=1e-13, max_iters=40),
                                      compute_upper=False)
    init = np.ones(part.n_states)
    init[part.unsafe_index] = 0.0
    base = model_from_abstraction(ab, accepting_states=[], initial_values=init)
    res_base = robust_value_iteration(base, horizon=Bounded(15), compute_upper=False)
    gap = float(np.max(np.abs(res_prod.lower.values[prod.lift[: part.n_cells]]
                              - res_base.lower.values[: part.n_cells])))
    elapsed = time.perf_counter() - t0
    ok = gap <= 1e-9 and dfa.n_states == 17
    report("bounded-horizon-cross-check", ok,
           f"17-state counter DFA vs 15-sweep recursion: max gap {gap:.2e} "
           f"(<= 1e-9), {elapsed:.0f}s")
