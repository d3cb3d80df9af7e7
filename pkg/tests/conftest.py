import numpy as np
import pytest

from umdpsyn.abstraction import PairBounds
from umdpsyn.geometry import AxisBox, build_grid
from umdpsyn.models import affine
from umdpsyn.noise import build_noise_model
from umdpsyn.synthesis import lp_adversary


def toy_affine_model(a=0.5, controls=((-0.2,), (0.0,), (0.2,)), noise_std=0.1,
                     noise_bound=0.3):
    """1-D contractive system x' = a x + u + w with truncated-normal noise."""
    return affine(a_matrix=[[a]], b_matrix=[[1.0]], controls=list(controls),
                  noise_mean=0.0, noise_std=noise_std,
                  noise_low=-noise_bound, noise_high=noise_bound)


def toy_partition(cells=20, goal=(-0.2, 0.2), block=2):
    safe = AxisBox(np.array([-1.0]), np.array([1.0]))
    regions = []
    if goal is not None:
        regions.append((AxisBox(np.array([goal[0]]), np.array([goal[1]])), {"goal"}))
    return build_grid(safe, [cells], regions, [block])


@pytest.fixture(scope="session")
def toy_setup():
    """Shared 1-D toy: model, partition, and a noise model from 20k samples."""
    model = toy_affine_model()
    part = toy_partition()
    rng = np.random.default_rng(0)
    samples = model.sample_noise(rng, 20_000)
    nm = build_noise_model(samples, target_clusters=24, eps_c=0.01, beta_c=0.01)
    return model, part, nm


def lp_rdp(pairs, accepting, n_states, sweeps, direction="min"):
    """Reference robust value iteration with the LP adversary.

    ``pairs`` maps (state, action) to PairBounds (possibly with a mass
    budget); absorbing non-accepting states may simply be missing.
    """
    values = accepting.astype(float)
    n_actions = max(a for _, a in pairs) + 1
    for _ in range(sweeps):
        new = values.copy()
        for s in range(n_states):
            if accepting[s]:
                continue
            best = None
            for a in range(n_actions):
                if (s, a) not in pairs:
                    continue
                _, obj = lp_adversary(pairs[(s, a)], values, direction)
                best = obj if best is None else max(best, obj)
            if best is not None:
                new[s] = best
        values = new
    return values


def random_budget_umdp(rng, n_states, n_actions, eps_c):
    """Random small UMDP with mass budgets; the last state is the trap."""
    trap = n_states - 1
    pairs = {}
    for s in range(n_states - 1):
        for a in range(n_actions):
            n_c = int(rng.integers(2, min(6, n_states)))
            c_set = np.sort(rng.choice(n_states - 1, size=n_c, replace=False))
            inside = 1.0 - eps_c * rng.random()
            gamma_c = rng.dirichlet(np.ones(n_c)) * inside
            lower = np.clip(gamma_c - rng.uniform(0, 0.3, n_c), 0.0, 1.0)
            upper = np.clip(gamma_c + rng.uniform(0, 0.3, n_c), 0.0, 1.0)
            blocks = []
            if n_c >= 3 and rng.random() < 0.8:
                members = c_set[:2]
                mass = gamma_c[:2].sum()
                blocks.append((members, max(0.0, mass - rng.uniform(0, 0.2)),
                               min(1.0, mass + rng.uniform(0, 0.2))))
            pairs[(s, a)] = PairBounds(
                n_states=n_states, succ=c_set, lower=lower, upper=upper,
                block_members=[np.asarray(m, dtype=np.int64) for m, _, _ in blocks],
                block_lower=np.array([b[1] for b in blocks]),
                block_upper=np.array([b[2] for b in blocks]),
                eps_c=eps_c, has_mass_budget=True)
    return pairs, trap


def fold_budget(pairs, trap, eps_c):
    """The conservative rewrite: budget dropped, trap upper bound grows."""
    folded = {}
    for key, pb in pairs.items():
        succ = pb.succ
        lower = pb.lower.copy()
        upper = pb.upper.copy()
        if trap in succ:
            k = list(succ).index(trap)
            upper[k] = min(1.0, upper[k] + eps_c)
        else:
            succ = np.concatenate([succ, [trap]])
            lower = np.concatenate([lower, [0.0]])
            upper = np.concatenate([upper, [min(1.0, eps_c)]])
        blocks = [(m, lo, min(1.0, hi + (eps_c if trap in m else 0.0)))
                  for m, lo, hi in zip(pb.block_members, pb.block_lower, pb.block_upper)]
        folded[key] = PairBounds(
            n_states=pb.n_states, succ=succ, lower=lower, upper=upper,
            block_members=[m for m, _, _ in blocks],
            block_lower=np.array([b[1] for b in blocks]),
            block_upper=np.array([b[2] for b in blocks]),
            has_mass_budget=False)
    return folded
