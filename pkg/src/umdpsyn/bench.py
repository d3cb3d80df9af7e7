"""Random feasible adversary instances and greedy-vs-LP benchmarks."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .abstraction import PairBounds
from .synthesis import (RobustModel, Bounded, lp_adversary,
                        o_maximize_2layer, robust_value_iteration)


def random_feasible_instance(rng: np.random.Generator, n_post: int,
                             max_block: int = 4, n_states: int | None = None):
    """Random simplified pair bounds plus values, certificates guaranteed.

    Intervals are widened around a hidden distribution gamma*, so gamma*
    is feasible and every nonemptiness certificate holds by construction.
    """
    n_states = n_states or n_post
    succ = np.sort(rng.choice(n_states, size=n_post, replace=False)).astype(np.int64)
    gamma_star = rng.dirichlet(np.full(n_post, 0.7))
    width_lo = rng.uniform(0.0, 0.4, size=n_post)
    width_hi = rng.uniform(0.0, 0.4, size=n_post)
    lower = np.clip(gamma_star - width_lo, 0.0, 1.0)
    upper = np.clip(gamma_star + width_hi, 0.0, 1.0)

    members: list[np.ndarray] = []
    block_lower = []
    block_upper = []
    pos = rng.permutation(n_post)
    cursor = 0
    while cursor < n_post:
        size = int(rng.integers(1, max_block + 1))
        chunk = pos[cursor:cursor + size]
        cursor += size
        if rng.random() < 0.3:
            continue  # leave these states blockless
        mass = gamma_star[chunk].sum()
        members.append(succ[chunk])
        block_lower.append(max(0.0, mass - rng.uniform(0.0, 0.3)))
        block_upper.append(min(1.0, mass + rng.uniform(0.0, 0.3)))
    values = rng.uniform(0.0, 1.0, size=n_states)
    bounds = PairBounds(
        n_states=n_states, succ=succ, lower=lower, upper=upper,
        block_members=members,
        block_lower=np.array(block_lower), block_upper=np.array(block_upper))
    return bounds, values


def random_robust_model(rng: np.random.Generator, n_states: int, n_actions: int,
                        n_post: int = 12, accepting_frac: float = 0.05) -> RobustModel:
    """Synthetic simplified model for end-to-end adversary benchmarks."""
    succ_indptr = [0]
    succ_state, succ_lo, succ_hi, succ_blk = [], [], [], []
    blk_indptr = [0]
    blk_lo, blk_hi = [], []
    for _ in range(n_states * n_actions):
        bounds, _ = random_feasible_instance(rng, n_post, n_states=n_states)
        local = np.full(n_post, -1, dtype=np.int64)
        pos = {int(s): k for k, s in enumerate(bounds.succ)}
        for b, mem in enumerate(bounds.block_members):
            for s in mem:
                local[pos[int(s)]] = b
        succ_state.append(bounds.succ)
        succ_lo.append(bounds.lower)
        succ_hi.append(bounds.upper)
        succ_blk.append(local)
        blk_lo.extend(bounds.block_lower.tolist())
        blk_hi.extend(bounds.block_upper.tolist())
        succ_indptr.append(succ_indptr[-1] + n_post)
        blk_indptr.append(len(blk_lo))
    accepting = np.zeros(n_states, dtype=bool)
    accepting[rng.choice(n_states, size=max(1, int(accepting_frac * n_states)),
                         replace=False)] = True
    return RobustModel(
        n_actions=n_actions,
        prod_s=np.arange(n_states, dtype=np.int64),
        prod_z=np.zeros(n_states, dtype=np.int64),
        pidx=np.arange(n_states, dtype=np.int64)[:, None],
        next_z=np.zeros((1, n_states), dtype=np.int64),
        accepting=accepting,
        succ_indptr=np.array(succ_indptr, dtype=np.int64),
        succ_state=np.concatenate(succ_state),
        succ_lower=np.concatenate(succ_lo),
        succ_upper=np.concatenate(succ_hi),
        succ_blk=np.concatenate(succ_blk),
        blk_indptr=np.array(blk_indptr, dtype=np.int64),
        blk_lower=np.array(blk_lo),
        blk_upper=np.array(blk_hi),
    )


def _time_greedy(bounds: PairBounds, values: np.ndarray, reps: int) -> float:
    o_maximize_2layer(bounds, values)  # warm the JIT before timing
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        o_maximize_2layer(bounds, values)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def _time_lp(bounds: PairBounds, values: np.ndarray, reps: int) -> float:
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        lp_adversary(bounds, values)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


@dataclass
class BenchReport:
    per_call: dict          # size -> {"greedy": s, "lp": s}
    greedy_ratio: float     # t(2 * base) / t(base) for the greedy adversary
    synthesis_greedy: float
    synthesis_lp: float

    @property
    def synthesis_speedup(self) -> float:
        return self.synthesis_lp / self.synthesis_greedy


def bench_adversary(sizes=(1000, 2000), seed: int = 0, reps: int = 50,
                    synth_states: int = 1600, synth_actions: int = 8,
                    synth_sweeps: int = 10) -> BenchReport:
    """Median per-call adversary times plus a full-synthesis comparison."""
    rng = np.random.default_rng(seed)
    per_call = {}
    for size in sizes:
        bounds, values = random_feasible_instance(rng, size, n_states=size)
        per_call[size] = {
            "greedy": _time_greedy(bounds, values, reps),
            "lp": _time_lp(bounds, values, max(3, reps // 10)),
        }
    ratio = per_call[sizes[-1]]["greedy"] / per_call[sizes[0]]["greedy"]

    model = random_robust_model(rng, synth_states, synth_actions)
    horizon = Bounded(synth_sweeps)
    t0 = time.perf_counter()
    res_greedy = robust_value_iteration(model, horizon=horizon, adversary="two-layer",
                                        compute_upper=False)
    t_greedy = time.perf_counter() - t0
    t0 = time.perf_counter()
    res_lp = robust_value_iteration(model, horizon=horizon, adversary="lp",
                                    compute_upper=False)
    t_lp = time.perf_counter() - t0
    gap = float(np.max(np.abs(res_greedy.lower.values - res_lp.lower.values)))
    if gap > 1e-7:
        raise AssertionError(f"greedy and LP value iteration disagree by {gap}")
    return BenchReport(per_call=per_call, greedy_ratio=ratio,
                       synthesis_greedy=t_greedy, synthesis_lp=t_lp)
