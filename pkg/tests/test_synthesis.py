import numpy as np
import pytest

from umdpsyn.abstraction import Mode, PairBounds, build_abstraction, simplify
from umdpsyn.automata import build_product, load_builtin_dfa, safety_counter_dfa, trivial_dfa
from umdpsyn.bench import random_feasible_instance
from umdpsyn.errors import InfeasibleGamma
from umdpsyn.synthesis import (Bounded, RobustModel, Unbounded, gamma_feasible,
                               lp_adversary, model_from_abstraction,
                               o_maximize_2layer, refine_strategy,
                               robust_value_iteration)

from conftest import fold_budget, lp_rdp, random_budget_umdp, toy_partition


def pair(n_states, succ, lower, upper, blocks=()):
    members = [np.asarray(m, dtype=np.int64) for m, _, _ in blocks]
    return PairBounds(
        n_states=n_states,
        succ=np.asarray(succ, dtype=np.int64),
        lower=np.asarray(lower, dtype=float),
        upper=np.asarray(upper, dtype=float),
        block_members=members,
        block_lower=np.array([b[1] for b in blocks], dtype=float),
        block_upper=np.array([b[2] for b in blocks], dtype=float),
    )


def test_omax_interval_only_example():
    # intervals [0.1,0.5],[0.2,0.6],[0,0.4] with values [0, 0.5, 1]
    pb = pair(3, [0, 1, 2], [0.1, 0.2, 0.0], [0.5, 0.6, 0.4])
    values = np.array([0.0, 0.5, 1.0])
    gamma, obj = o_maximize_2layer(pb, values, "min")
    assert np.allclose(gamma, [0.5, 0.5, 0.0])
    assert obj == pytest.approx(0.25)
    _, lp_obj = lp_adversary(pb, values, "min")
    assert lp_obj == pytest.approx(obj, abs=1e-9)


def test_omax_unconstrained_dirac():
    pb = pair(3, [0, 1, 2], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    values = np.array([0.7, 0.0, 0.9])
    gamma, obj = o_maximize_2layer(pb, values, "min")
    assert np.allclose(gamma, [0.0, 1.0, 0.0])
    assert obj == 0.0


def test_omax_block_example():
    # block {1,2} in [0.7, 0.8]; the block lower forces 0.2 onto state 2
    # after state 1 saturates; the residual 0.3 goes to state 3
    pb = pair(3, [0, 1, 2], [0.0, 0.0, 0.0], [0.5, 0.5, 0.5],
              blocks=[([0, 1], 0.7, 0.8)])
    values = np.array([0.0, 1.0, 0.2])
    gamma, obj = o_maximize_2layer(pb, values, "min")
    assert np.allclose(gamma, [0.5, 0.2, 0.3])
    assert obj == pytest.approx(0.26)
    lp_gamma, lp_obj = lp_adversary(pb, values, "min")
    assert lp_obj == pytest.approx(obj, abs=1e-9)
    assert gamma_feasible(pb, gamma) and gamma_feasible(pb, lp_gamma, tol=1e-8)


def test_omax_max_direction_mirror():
    pb = pair(3, [0, 1, 2], [0.1, 0.2, 0.0], [0.5, 0.6, 0.4])
    values = np.array([0.0, 0.5, 1.0])
    gamma, obj = o_maximize_2layer(pb, values, "max")
    _, lp_obj = lp_adversary(pb, values, "max")
    assert obj == pytest.approx(lp_obj, abs=1e-9)
    assert obj >= 0.25


def test_omax_rejects_infeasible():
    pb = pair(2, [0, 1], [0.0, 0.0], [0.3, 0.3])  # uppers sum below 1
    with pytest.raises(InfeasibleGamma):
        o_maximize_2layer(pb, np.array([0.0, 1.0]), "min")


def test_oracle_equivalence_random_instances():
    rng = np.random.default_rng(123)
    for _ in range(150):
        n = int(rng.integers(1, 21))
        pb, values = random_feasible_instance(rng, n)
        for direction in ("min", "max"):
            gamma, obj = o_maximize_2layer(pb, values, direction)
            _, lp_obj = lp_adversary(pb, values, direction)
            assert abs(obj - lp_obj) <= 1e-9
            assert gamma_feasible(pb, gamma, tol=1e-12)


def test_argmax_stability_under_value_rescaling():
    rng = np.random.default_rng(7)
    for _ in range(50):
        pb, values = random_feasible_instance(rng, int(rng.integers(2, 15)))
        g1, o1 = o_maximize_2layer(pb, values, "min")
        g2, o2 = o_maximize_2layer(pb, 0.37 * values, "min")
        assert np.array_equal(g1 > 0, g2 > 0)
        assert np.allclose(g1, g2)
        assert o2 == pytest.approx(0.37 * o1, abs=1e-12)


def chain_model(goal_interval=(0.4, 0.6)):
    """start -> {goal, trap} with the given interval to goal."""
    lo, hi = goal_interval
    return RobustModel(
        n_actions=1,
        prod_s=np.arange(3, dtype=np.int64),
        prod_z=np.zeros(3, dtype=np.int64),
        pidx=np.arange(3, dtype=np.int64)[:, None],
        next_z=np.zeros((1, 3), dtype=np.int64),
        accepting=np.array([False, True, False]),
        succ_indptr=np.array([0, 2, 3, 4], dtype=np.int64),
        succ_state=np.array([1, 2, 1, 2], dtype=np.int64),
        succ_lower=np.array([lo, 1.0 - hi, 1.0, 1.0]),
        succ_upper=np.array([hi, 1.0 - lo, 1.0, 1.0]),
        succ_blk=np.full(4, -1, dtype=np.int64),
        blk_indptr=np.zeros(4, dtype=np.int64),
        blk_lower=np.zeros(0),
        blk_upper=np.zeros(0),
    )


def test_rvi_interval_chain():
    res = robust_value_iteration(chain_model(), horizon=Unbounded(tol=1e-10))
    assert res.lower.values[0] == pytest.approx(0.4, abs=1e-9)
    assert res.upper.values[0] == pytest.approx(0.6, abs=1e-9)
    assert res.lower.values[1] == 1.0 and res.lower.values[2] == 0.0
    assert res.e_avg != res.e_avg  # not filled outside the pipeline (nan)


def test_rvi_certain_reachability():
    res = robust_value_iteration(chain_model((1.0, 1.0)), horizon=Unbounded())
    assert res.lower.values[0] == pytest.approx(1.0, abs=1e-9)


def test_rvi_lp_adversary_agrees():
    res_g = robust_value_iteration(chain_model(), horizon=Unbounded(tol=1e-10))
    res_l = robust_value_iteration(chain_model(), horizon=Unbounded(tol=1e-10),
                                   adversary="lp")
    assert np.allclose(res_g.lower.values, res_l.lower.values, atol=1e-9)
    assert np.allclose(res_g.upper.values, res_l.upper.values, atol=1e-9)


def test_rvi_monotone_and_ordered(toy_setup):
    model, part, nm = toy_setup
    ab = simplify(build_abstraction(part, model, nm, Mode.FULL, alpha=0.05))
    prod = build_product(ab, part, load_builtin_dfa("phi1"))
    res = robust_value_iteration(prod, horizon=Unbounded(tol=1e-9))
    assert res.lower.converged and res.upper.converged
    assert np.all(res.lower.values <= res.upper.values + 1e-12)
    assert np.all(res.lower.values >= 0) and np.all(res.upper.values <= 1)
    assert res.lower.values[prod.accepting].min() == 1.0


def test_simplification_lemma_on_random_umdps():
    """Folding the budget can only lower the robust value, pointwise."""
    rng = np.random.default_rng(17)
    for _ in range(10):
        n_states = int(rng.integers(4, 9))
        eps_c = float(rng.uniform(0.005, 0.1))
        pairs, trap = random_budget_umdp(rng, n_states, 2, eps_c)
        accepting = np.zeros(n_states, dtype=bool)
        accepting[int(rng.integers(n_states - 1))] = True
        original = lp_rdp(pairs, accepting, n_states, sweeps=12)
        folded = lp_rdp(fold_budget(pairs, trap, eps_c), accepting, n_states, sweeps=12)
        assert np.all(folded <= original + 1e-9)


def test_simplify_value_ordering_on_real_build(toy_setup):
    """Pipeline simplify vs LP value iteration on the unsimplified set."""
    model, part, nm = toy_setup
    ab = build_abstraction(part, model, nm, Mode.FULL, alpha=0.05)
    prod = build_product(simplify(ab), part, load_builtin_dfa("phi1"))
    res = robust_value_iteration(prod, horizon=Bounded(10), compute_upper=False)
    # reference: LP with the explicit mass budget on the base pairs
    accepting = np.array([prod.accepting[prod.lift[s]] for s in range(part.n_states)])
    pairs = {(s, a): ab.pair_view(s, a)
             for s in range(part.n_cells) for a in range(model.n_actions)}
    reference = lp_rdp(pairs, accepting, part.n_states, sweeps=10)
    lifted = res.lower.values[prod.lift[: part.n_cells]]
    assert np.all(lifted <= reference[: part.n_cells] + 1e-9)


def test_bounded_horizon_matches_counter_dfa(toy_setup):
    model, _, nm = toy_setup
    part = toy_partition(goal=None)  # pure safety: only the unsafe label
    ab = simplify(build_abstraction(part, model, nm, Mode.FULL, alpha=0.05))
    horizon = 4
    prod = build_product(ab, part, safety_counter_dfa(horizon))
    res_prod = robust_value_iteration(prod, horizon=Unbounded(tol=1e-12, max_iters=50),
                                      compute_upper=False)
    init = np.ones(part.n_states)
    init[part.unsafe_index] = 0.0
    base = model_from_abstraction(ab, accepting_states=[], initial_values=init)
    res_base = robust_value_iteration(base, horizon=Bounded(horizon),
                                      compute_upper=False)
    lifted = res_prod.lower.values[prod.lift[: part.n_cells]]
    assert np.max(np.abs(lifted - res_base.lower.values[: part.n_cells])) <= 1e-9


def test_mode_ordering_pointwise(toy_setup):
    model, part, nm = toy_setup
    dfa = load_builtin_dfa("phi1")
    values = {}
    for mode in (Mode.NAIVE, Mode.SUPPORT_ONLY, Mode.FULL):
        ab = simplify(build_abstraction(part, model, nm, mode, alpha=0.05))
        prod = build_product(ab, part, dfa)
        res = robust_value_iteration(prod, horizon=Unbounded(tol=1e-9),
                                     compute_upper=False)
        values[mode] = res.lower.values[prod.lift[: part.n_cells]]
    assert np.all(values[Mode.NAIVE] <= values[Mode.SUPPORT_ONLY] + 1e-9)
    assert np.all(values[Mode.SUPPORT_ONLY] <= values[Mode.FULL] + 1e-9)


def test_refine_strategy_controller(toy_setup):
    model, part, nm = toy_setup
    dfa = load_builtin_dfa("phi1")
    ab = simplify(build_abstraction(part, model, nm, Mode.FULL, alpha=0.05))
    prod = build_product(ab, part, dfa)
    res = robust_value_iteration(prod, horizon=Unbounded(tol=1e-9))
    controller = refine_strategy(res, part, dfa)
    # unsafe start: bound 0 and the first action
    assert controller.reset(np.array([5.0])) == 0.0
    assert controller.action(np.array([5.0])) == 0
    # safe start: bound equals the lifted lower value and actions follow the
    # product strategy while the DFA state tracks the labels
    x0 = np.array([0.55])
    bound = controller.reset(x0)
    s0 = part.locate(x0)
    assert bound == pytest.approx(res.lower.values[prod.lift[s0]])
    x = x0
    z = dfa.step(dfa.initial, part.labels_of(s0))
    for _ in range(3):
        a = controller.action(x)
        node = prod.pidx[part.locate(x), z]
        assert a == int(res.strategy.actions[node])
        x = model.step(x[None, :], a, np.zeros((1, 1)))[0]
        controller.observe(x)
        z = dfa.step(z, part.labels_of(part.locate(x)))
        assert controller.dfa_state == z


def test_refine_strategy_trivial_product(toy_setup):
    model, part, nm = toy_setup
    dfa = trivial_dfa(sorted(part.atomic_propositions()))
    ab = simplify(build_abstraction(part, model, nm, Mode.FULL, alpha=0.05))
    prod = build_product(ab, part, dfa)
    res = robust_value_iteration(prod, horizon=Unbounded())
    controller = refine_strategy(res, part, dfa)
    assert controller.reset(np.array([0.3])) == 1.0
    assert controller.accepted()
