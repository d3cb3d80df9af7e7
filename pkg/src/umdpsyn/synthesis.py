"""Robust dynamic programming on the (product) UMDP.

Lower values come from max-over-actions against the minimizing adversary,
upper values against the maximizing one, both over the same simplified
uncertainty sets.  The greedy 2-layer allocation and an explicit LP solve
the same inner problem; the LP is the test-and-benchmark oracle.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import _kernels
from .abstraction import PairBounds, UmdpAbstraction
from .automata import Dfa, ProductUmdp
from .errors import InfeasibleGamma, LpInfeasible
from .geometry import Partition


# ---------------------------------------------------------------------------
# single-pair adversaries
# ---------------------------------------------------------------------------

def o_maximize_2layer(bounds: PairBounds, values: np.ndarray, direction: str = "min"):
    """Optimal adversary for one pair via the 2-layer greedy allocation.

    ``values`` is indexed by state; returns ``(gamma, objective)`` with
    gamma dense over the pair's state space.  Requires explicit bounds
    (``default_upper == 0``) and no mass budget (simplified form).
    """
    if bounds.has_mass_budget:
        raise ValueError("greedy adversary requires the simplified form (no mass budget)")
    if bounds.default_upper > 0:
        raise ValueError("greedy single-pair adversary requires explicit bounds")
    ascending = _ascending(direction)
    vals = np.asarray(values, dtype=float)[bounds.succ]
    blk = _local_block_ids(bounds)
    g, obj, leftover = _kernels.omax_pair(
        vals, np.asarray(bounds.lower, dtype=float),
        np.asarray(bounds.upper, dtype=float), blk,
        np.asarray(bounds.block_lower, dtype=float),
        np.asarray(bounds.block_upper, dtype=float), ascending)
    if leftover > 1e-9:
        raise InfeasibleGamma(f"could not place {leftover} probability mass")
    gamma = np.zeros(bounds.n_states)
    gamma[bounds.succ] = g
    return gamma, float(obj)


def lp_adversary(bounds: PairBounds, values: np.ndarray, direction: str = "min"):
    """Same contract as the greedy adversary, solved as an explicit LP.

    Also handles the unsimplified form: with ``has_mass_budget`` the
    constraint sum over C(s, a) >= 1 - eps_c is added and free states
    (absent entries) are allowed anywhere on the simplex; with
    ``default_upper`` > 0 absent states get that upper bound instead.
    """
    values = np.asarray(values, dtype=float)
    ascending = _ascending(direction)
    succ = np.asarray(bounds.succ, dtype=np.int64)
    free_states = bounds.has_mass_budget or bounds.default_upper > 0
    if free_states:
        n_var = bounds.n_states
        lo = np.zeros(n_var)
        if bounds.default_upper > 0:
            hi = np.zeros(n_var)
            free = np.ones(n_var, dtype=bool) if bounds.free_mask is None \
                else bounds.free_mask.copy()
            hi[free] = bounds.default_upper
        else:
            hi = np.ones(n_var)
        lo[succ] = bounds.lower
        hi[succ] = bounds.upper
        cost = values.copy()
    else:
        pos_of_state = {int(s): k for k, s in enumerate(succ)}
        n_var = len(succ)
        lo = np.asarray(bounds.lower, dtype=float)
        hi = np.asarray(bounds.upper, dtype=float)
        cost = values[succ]
    a_ub, b_ub = [], []
    for members, b_lo, b_hi in zip(bounds.block_members, bounds.block_lower,
                                   bounds.block_upper):
        row = np.zeros(n_var)
        if free_states:
            row[members] = 1.0
        else:
            for s in members:
                row[pos_of_state[int(s)]] = 1.0
        a_ub.append(row)
        b_ub.append(b_hi)
        a_ub.append(-row)
        b_ub.append(-b_lo)
    if bounds.has_mass_budget:
        row = np.zeros(n_var)
        row[succ] = -1.0
        a_ub.append(row)
        b_ub.append(-(1.0 - bounds.eps_c))
    res = linprog(
        c=cost if ascending else -cost,
        A_ub=np.array(a_ub) if a_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.ones((1, n_var)), b_eq=np.array([1.0]),
        bounds=list(zip(lo, hi)), method="highs")
    if not res.success:
        raise LpInfeasible(f"LP adversary infeasible: {res.message}")
    gamma = np.zeros(bounds.n_states)
    if free_states:
        gamma[:] = res.x
    else:
        gamma[succ] = res.x
    return gamma, float(values @ gamma)


def _ascending(direction: str) -> bool:
    if direction in ("min", "minimize"):
        return True
    if direction in ("max", "maximize"):
        return False
    raise ValueError(f"direction must be 'min' or 'max', got {direction!r}")


def _local_block_ids(bounds: PairBounds) -> np.ndarray:
    blk = np.full(len(bounds.succ), -1, dtype=np.int64)
    pos = {int(s): k for k, s in enumerate(bounds.succ)}
    for b, members in enumerate(bounds.block_members):
        for s in members:
            blk[pos[int(s)]] = b
    return blk


def gamma_feasible(bounds: PairBounds, gamma: np.ndarray, tol: float = 1e-12) -> bool:
    """Check every constraint of the uncertainty set at the given tolerance."""
    gamma = np.asarray(gamma, dtype=float)
    if abs(gamma.sum() - 1.0) > tol or np.any(gamma < -tol):
        return False
    g = gamma[bounds.succ]
    if np.any(g < bounds.lower - tol) or np.any(g > bounds.upper + tol):
        return False
    others = np.ones(bounds.n_states, dtype=bool)
    others[bounds.succ] = False
    if bounds.default_upper > 0:
        cap = np.full(bounds.n_states, bounds.default_upper)
        if bounds.free_mask is not None:
            cap[~bounds.free_mask] = 0.0
    else:
        cap = np.full(bounds.n_states, 1.0 if bounds.has_mass_budget else 0.0)
    if np.any(gamma[others] > cap[others] + tol):
        return False
    for members, b_lo, b_hi in zip(bounds.block_members, bounds.block_lower,
                                   bounds.block_upper):
        tot = gamma[members].sum()
        if tot < b_lo - tol or tot > b_hi + tol:
            return False
    if bounds.has_mass_budget and gamma[bounds.succ].sum() < 1.0 - bounds.eps_c - tol:
        return False
    return True


# ---------------------------------------------------------------------------
# value iteration
# ---------------------------------------------------------------------------

@dataclass
class Unbounded:
    tol: float = 1e-6
    max_iters: int = 10_000


@dataclass
class Bounded:
    steps: int


@dataclass
class ValueFunction:
    values: np.ndarray
    iterations: int
    residual: float
    converged: bool = True


@dataclass
class Strategy:
    """Memoryless product strategy: product node -> action index."""

    actions: np.ndarray
    product: ProductUmdp | None = None


@dataclass
class RobustModel:
    """Value-iteration view of a (product) UMDP with shared base bounds."""

    n_actions: int
    prod_s: np.ndarray
    prod_z: np.ndarray
    pidx: np.ndarray
    next_z: np.ndarray
    accepting: np.ndarray
    succ_indptr: np.ndarray
    succ_state: np.ndarray
    succ_lower: np.ndarray
    succ_upper: np.ndarray
    succ_blk: np.ndarray
    blk_indptr: np.ndarray
    blk_lower: np.ndarray
    blk_upper: np.ndarray
    default_upper: float = 0.0
    abstraction: UmdpAbstraction | None = None
    initial_values: np.ndarray | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.prod_s)


def model_from_product(product: ProductUmdp) -> RobustModel:
    ab = product.abstraction
    _require_simplified(ab)
    return RobustModel(
        n_actions=ab.n_actions,
        prod_s=product.prod_s, prod_z=product.prod_z,
        pidx=product.pidx, next_z=product.next_z,
        accepting=product.accepting.astype(np.bool_),
        succ_indptr=ab.succ_indptr, succ_state=ab.succ_state,
        succ_lower=ab.succ_lower, succ_upper=ab.succ_upper, succ_blk=ab.succ_blk,
        blk_indptr=ab.blk_indptr, blk_lower=ab.blk_lower, blk_upper=ab.blk_upper,
        default_upper=ab.default_upper,
        abstraction=ab,
    )


def model_from_abstraction(ab: UmdpAbstraction, accepting_states=None,
                           initial_values: np.ndarray | None = None) -> RobustModel:
    """Trivial-DFA view of the base abstraction (e.g. for bounded safety)."""
    _require_simplified(ab)
    n = ab.n_states
    accepting = np.zeros(n, dtype=bool)
    if accepting_states is not None:
        accepting[np.asarray(list(accepting_states), dtype=np.int64)] = True
    return RobustModel(
        n_actions=ab.n_actions,
        prod_s=np.arange(n, dtype=np.int64),
        prod_z=np.zeros(n, dtype=np.int64),
        pidx=np.arange(n, dtype=np.int64)[:, None],
        next_z=np.zeros((1, n), dtype=np.int64),
        accepting=accepting,
        succ_indptr=ab.succ_indptr, succ_state=ab.succ_state,
        succ_lower=ab.succ_lower, succ_upper=ab.succ_upper, succ_blk=ab.succ_blk,
        blk_indptr=ab.blk_indptr, blk_lower=ab.blk_lower, blk_upper=ab.blk_upper,
        default_upper=ab.default_upper,
        abstraction=ab,
        initial_values=initial_values,
    )


def _require_simplified(ab: UmdpAbstraction):
    if not ab.simplified:
        raise ValueError("run simplify() on the abstraction before value iteration")


def _sweep(model: RobustModel, values: np.ndarray, ascending: bool, adversary: str):
    out_values = np.empty_like(values)
    out_actions = np.zeros(model.n_nodes, dtype=np.int64)
    out_leftover = np.zeros(model.n_nodes)
    if adversary == "lp":
        _sweep_lp(model, values, ascending, out_values, out_actions, out_leftover)
    elif model.default_upper > 0:
        global_order = np.argsort(values if ascending else -values, kind="stable")
        _kernels.sweep_implicit(
            values, model.accepting, model.prod_s, model.prod_z, model.n_actions,
            model.succ_indptr, model.succ_state, model.succ_lower, model.succ_upper,
            model.pidx, model.next_z, global_order, model.default_upper, ascending,
            out_values, out_actions, out_leftover)
    else:
        _kernels.sweep_blocks(
            values, model.accepting, model.prod_s, model.prod_z, model.n_actions,
            model.succ_indptr, model.succ_state, model.succ_lower, model.succ_upper,
            model.succ_blk, model.blk_indptr, model.blk_lower, model.blk_upper,
            model.pidx, model.next_z, ascending,
            out_values, out_actions, out_leftover)
    worst = float(out_leftover.max()) if model.n_nodes else 0.0
    if worst > 1e-9:
        raise InfeasibleGamma(
            f"adversary could not place {worst} probability mass; bounds corrupted")
    return out_values, out_actions


def _sweep_lp(model, values, ascending, out_values, out_actions, out_leftover):
    direction = "min" if ascending else "max"
    n_actions = model.n_actions
    for i in range(model.n_nodes):
        if model.accepting[i]:
            out_values[i] = 1.0
            continue
        s, z = model.prod_s[i], model.prod_z[i]
        best, besta = -1.0, 0
        for a in range(n_actions):
            pb = _pair_bounds_product(model, int(s), int(z), a)
            _, obj = lp_adversary(pb, values, direction)
            if obj > best:
                best, besta = obj, a
        out_values[i] = min(max(best, 0.0), 1.0)
        out_actions[i] = besta


def _pair_bounds_product(model: RobustModel, s: int, z: int, a: int):
    """Pair bounds of a product pair, with successors as product nodes."""
    p = s * model.n_actions + a
    sl = slice(model.succ_indptr[p], model.succ_indptr[p + 1])
    bl = slice(model.blk_indptr[p], model.blk_indptr[p + 1])
    base_succ = model.succ_state[sl]
    nodes = model.pidx[base_succ, model.next_z[z, base_succ]]
    local = model.succ_blk[sl]
    members = [nodes[local == k] for k in range(bl.stop - bl.start)]
    order = np.argsort(nodes, kind="stable")
    free_mask = None
    if model.default_upper > 0:
        # the implicit interval exists only where the DFA step is consistent
        free_mask = model.prod_z == model.next_z[z, model.prod_s]
    return PairBounds(
        n_states=model.n_nodes,
        succ=nodes[order],
        lower=model.succ_lower[sl][order],
        upper=model.succ_upper[sl][order],
        block_members=members,
        block_lower=model.blk_lower[bl].copy(),
        block_upper=model.blk_upper[bl].copy(),
        default_upper=model.default_upper,
        has_mass_budget=False,
        free_mask=free_mask,
    )


@dataclass
class SynthesisResult:
    lower: ValueFunction
    upper: ValueFunction
    strategy: Strategy
    e_avg: float = float("nan")
    timings: dict = field(default_factory=dict)


def robust_value_iteration(model_or_product, horizon=None,
                           adversary: str = "two-layer",
                           compute_upper: bool = True) -> SynthesisResult:
    """Synchronous robust value iteration on the simplified (product) UMDP.

    Lower values use (max over actions, min over the uncertainty set);
    upper values use (max, max) over the same sets.  The strategy is the
    argmax of the converged lower recursion, ties to the lowest action
    index.  ``Bounded(K)`` runs exactly K sweeps.
    """
    if isinstance(model_or_product, ProductUmdp):
        model = model_from_product(model_or_product)
        product = model_or_product
    else:
        model = model_or_product
        product = None
    horizon = horizon or Unbounded()
    if adversary not in ("two-layer", "lp"):
        raise ValueError("adversary must be 'two-layer' or 'lp'")

    lower, actions = _iterate(model, horizon, adversary, ascending=True)
    if compute_upper:
        upper, _ = _iterate(model, horizon, adversary, ascending=False)
        if np.any(upper.values < lower.values - 1e-9):
            raise AssertionError("upper value function dipped below the lower one")
    else:
        upper = ValueFunction(values=lower.values.copy(),
                              iterations=0, residual=0.0)
    strategy = Strategy(actions=actions, product=product)
    return SynthesisResult(lower=lower, upper=upper, strategy=strategy)


def _iterate(model: RobustModel, horizon, adversary: str, ascending: bool):
    if model.initial_values is not None:
        values = np.asarray(model.initial_values, dtype=float).copy()
        monotone = False
    else:
        values = np.where(model.accepting, 1.0, 0.0)
        monotone = True
    actions = np.zeros(model.n_nodes, dtype=np.int64)
    if isinstance(horizon, Bounded):
        residual = 0.0
        for _ in range(horizon.steps):
            new_values, actions = _sweep(model, values, ascending, adversary)
            residual = float(np.max(np.abs(new_values - values))) if model.n_nodes else 0.0
            values = new_values
        vf = ValueFunction(values=values, iterations=horizon.steps, residual=residual)
    else:
        it = 0
        residual = np.inf
        while it < horizon.max_iters:
            new_values, actions = _sweep(model, values, ascending, adversary)
            if monotone and np.any(new_values < values - 1e-12):
                raise AssertionError("value iteration lost monotonicity")
            residual = float(np.max(np.abs(new_values - values))) if model.n_nodes else 0.0
            values = new_values
            it += 1
            if residual < horizon.tol:
                break
        converged = residual < horizon.tol
        if not converged:
            warnings.warn(
                f"value iteration stopped at {it} sweeps with residual {residual:.3e}",
                RuntimeWarning, stacklevel=2)
        vf = ValueFunction(values=values, iterations=it, residual=residual,
                           converged=converged)
    if np.any(vf.values < -1e-12) or np.any(vf.values > 1.0 + 1e-12):
        raise AssertionError("value function left [0, 1]")
    return vf, actions


# ---------------------------------------------------------------------------
# strategy refinement
# ---------------------------------------------------------------------------

class Controller:
    """Finite-memory controller refined from the product strategy.

    Tracks the DFA state alongside the physical state: initialize with
    ``reset(x0)``, ask for the input with ``action(x)``, then feed the
    observed next state through ``observe(x')``.
    """

    def __init__(self, strategy: Strategy, partition: Partition, dfa: Dfa,
                 lower_values: np.ndarray):
        if strategy.product is None:
            raise ValueError("strategy carries no product; refine on a product result")
        self.strategy = strategy
        self.partition = partition
        self.dfa = dfa
        self.product = strategy.product
        self.lower_values = lower_values
        self._z = dfa.initial

    def reset(self, x0: np.ndarray) -> float:
        """Start an episode; returns the certified lower bound at x0."""
        s = self.partition.locate(x0)
        self._z = int(self.product.next_z[self.dfa.initial, s])
        node = int(self.product.lift[s])
        if s == self.partition.unsafe_index:
            return 0.0
        return float(self.lower_values[node])

    @property
    def dfa_state(self) -> int:
        return self._z

    def action(self, x: np.ndarray) -> int:
        s = self.partition.locate(x)
        node = int(self.product.pidx[s, self._z])
        if node < 0:
            return 0  # outside the certified mass; any action is admissible
        return int(self.strategy.actions[node])

    def observe(self, x_next: np.ndarray):
        s = self.partition.locate(x_next)
        self._z = int(self.product.next_z[self._z, s])

    def accepted(self) -> bool:
        return self._z in self.dfa.accepting


def refine_strategy(result: SynthesisResult, partition: Partition, dfa: Dfa) -> Controller:
    """Stateful controller carrying the certified bound p_lower(Lift(J(x0)))."""
    return Controller(result.strategy, partition, dfa, result.lower.values)
