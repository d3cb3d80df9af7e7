"""Monte Carlo closed-loop validation of the certified bounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .automata import Dfa
from .errors import ConfigError
from .models import DynamicsModel
from .synthesis import Controller


@dataclass
class TrajectoryRecord:
    x0: np.ndarray
    states: np.ndarray      # (steps + 1, state_dim)
    actions: np.ndarray     # (steps,)
    labels: list            # one label set per visited state
    accepted: bool
    steps: int

    def __post_init__(self):
        if len(self.states) != len(self.actions) + 1 or len(self.labels) != len(self.states):
            raise ValueError("inconsistent trajectory lengths")


def _episode_rng(seed: int, episode: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=(seed, episode)))


def simulate(controller: Controller, model: DynamicsModel, x0: np.ndarray,
             max_steps: int, n_runs: int, dfa: Dfa, seed: int = 0,
             noise_sampler=None, keep_records: bool = True):
    """Closed-loop episodes from x0; returns (rate, (ci_low, ci_high), records).

    An episode succeeds when the DFA accepts, and fails when the state
    leaves the safe set before acceptance or when ``max_steps`` elapse
    (truncation counts as failure, keeping the rate a valid lower
    estimate).  Episode k draws its noise from a generator seeded by
    (seed, k), so results do not depend on scheduling.
    """
    if max_steps < 1:
        raise ConfigError("simulate.max_steps must be >= 1")
    part = controller.partition
    draw = noise_sampler or (lambda rng, size: model.sample_noise(rng, size))
    successes = 0
    records: list[TrajectoryRecord] = []
    x0 = np.asarray(x0, dtype=float)
    for episode in range(n_runs):
        rng = _episode_rng(seed, episode)
        controller.reset(x0)
        x = x0.copy()
        states = [x.copy()]
        actions: list[int] = []
        labels = [part.labels_of(part.locate(x))]
        accepted = controller.accepted()
        for _ in range(max_steps):
            if accepted:
                break
            if part.locate(x) == part.unsafe_index:
                break
            a = controller.action(x)
            w = draw(rng, 1)
            x = model.step(x[None, :], a, w)[0]
            controller.observe(x)
            actions.append(a)
            states.append(x.copy())
            labels.append(part.labels_of(part.locate(x)))
            accepted = controller.accepted()
        successes += accepted
        if keep_records:
            records.append(TrajectoryRecord(
                x0=x0.copy(), states=np.array(states), actions=np.array(actions, dtype=int),
                labels=labels, accepted=bool(accepted), steps=len(actions)))
    rate = successes / n_runs
    half = 1.96 * np.sqrt(rate * (1.0 - rate) / n_runs)
    return rate, (max(0.0, rate - half), min(1.0, rate + half)), records


def sweep_initial_states(controller: Controller, model: DynamicsModel, dfa: Dfa,
                         cells: np.ndarray, episodes: int, max_steps: int,
                         seed: int = 0, noise_sampler=None) -> np.ndarray:
    """Per-cell closed-loop rates from the cell centers.

    Returns rows ``[cell_index, x_center..., p_lower, empirical, ci_low,
    ci_high]``.  Cell k's episodes use seeds derived from (seed, k) so the
    sweep equals independent simulate calls.
    """
    part = controller.partition
    rows = []
    for cell in np.asarray(cells, dtype=int):
        center = part.cell_box(int(cell))
        x0 = 0.5 * (center.lower + center.upper)
        p_lower = controller.reset(x0)
        rate, (lo, hi), _ = simulate(
            controller, model, x0, max_steps, episodes, dfa,
            seed=int(np.random.SeedSequence(entropy=(seed, int(cell))).generate_state(1)[0]),
            noise_sampler=noise_sampler, keep_records=False)
        rows.append([float(cell), *x0.tolist(), p_lower, rate, lo, hi])
    return np.array(rows)
