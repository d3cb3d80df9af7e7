import itertools
import json

import numpy as np
import pytest

from umdpsyn.abstraction import Mode, build_abstraction, simplify
from umdpsyn.automata import (build_product, dfa_from_dict, dfa_run, load_builtin_dfa,
                              load_dfa, safety_counter_dfa, trivial_dfa)
from umdpsyn.errors import (IncompleteTransition, NondeterministicEdge, ParseError,
                            UnknownProposition)
from umdpsyn.noise import build_noise_model
from umdpsyn.synthesis import (gamma_feasible, lp_adversary, model_from_product,
                               _pair_bounds_product)

from conftest import toy_affine_model, toy_partition


def phi1_oracle(trace):
    """Reach-avoid over finite traces: some prefix sees goal with no unsafe."""
    seen_unsafe = False
    for labels in trace:
        if "unsafe" in labels:
            return False
        if "goal" in labels:
            return True
        seen_unsafe or None
    return False


def all_label_sets(ap):
    out = []
    for k in range(1 << len(ap)):
        out.append(frozenset(p for i, p in enumerate(ap) if (k >> i) & 1))
    return out


def test_phi1_dfa_against_trace_enumeration():
    dfa = load_builtin_dfa("phi1")
    assert dfa.n_states == 3
    labels = all_label_sets(["goal", "unsafe"])
    for length in (0, 1, 2):
        for trace in itertools.product(labels, repeat=length):
            _, accepted = dfa_run(dfa, list(trace))
            assert accepted == phi1_oracle(trace), f"trace {trace}"


def test_phi1_dfa_examples():
    dfa = load_builtin_dfa("phi1")
    assert dfa_run(dfa, []) == (0, False)
    assert dfa_run(dfa, [set(), {"goal"}])[1] is True
    assert dfa_run(dfa, [{"unsafe"}, {"goal"}])[1] is False  # the trap latches


def test_trivial_dfa_accepts_everything():
    dfa = trivial_dfa(["goal"])
    for trace in ([], [{"goal"}], [set(), set(), {"goal"}]):
        assert dfa_run(dfa, trace)[1] is True


def phi3_oracle(trace, horizon=15):
    """Bounded safety: some prefix has no unsafe label at positions 0..horizon."""
    if len(trace) < horizon + 1:
        return False
    for t in range(horizon + 1, len(trace) + 1):
        if all("unsafe" not in labels for labels in trace[:t]):
            return True
    return False


def test_phi3_counter_dfa():
    dfa = load_builtin_dfa("phi3")
    assert dfa.n_states == 17
    rng = np.random.default_rng(0)
    # all short traces plus random traces up to length 16
    for trace in itertools.product([frozenset(), frozenset({"unsafe"})], repeat=5):
        assert dfa_run(dfa, list(trace))[1] == phi3_oracle(trace)
    for _ in range(500):
        length = int(rng.integers(0, 17))
        trace = [frozenset({"unsafe"}) if rng.random() < 0.3 else frozenset()
                 for _ in range(length)]
        assert dfa_run(dfa, trace)[1] == phi3_oracle(trace), trace
    assert safety_counter_dfa(15).n_states == 17


def test_dfa_unknown_proposition():
    dfa = load_builtin_dfa("phi1")
    with pytest.raises(UnknownProposition):
        dfa_run(dfa, [{"charge"}])


def test_dfa_validation_errors(tmp_path):
    base = {"ap": ["a"], "states": 2, "initial": 0, "accepting": [1]}
    with pytest.raises(NondeterministicEdge):
        dfa_from_dict({**base, "edges": [
            {"from": 0, "label": {"a": True}, "to": 0},
            {"from": 0, "label": {}, "to": 1},
            {"from": 1, "label": "else", "to": 1},
        ]})
    with pytest.raises(IncompleteTransition):
        dfa_from_dict({**base, "edges": [
            {"from": 0, "label": {"a": True}, "to": 1},
            {"from": 1, "label": "else", "to": 1},
        ]})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ParseError):
        load_dfa(str(bad))


def test_phi2_dfa_semantics():
    dfa = load_builtin_dfa("phi2")
    runs = {
        (): False,
        (frozenset({"charge"}),): True,
        (frozenset({"water"}), frozenset({"charge"})): False,  # still wet
        (frozenset({"water"}), frozenset({"carpet"}), frozenset({"charge"})): True,
        (frozenset({"water"}), frozenset({"carpet", "charge"})): True,
        (frozenset({"unsafe"}), frozenset({"charge"})): False,
        (frozenset(), frozenset({"water", "charge"})): False,
    }
    for trace, want in runs.items():
        assert dfa_run(dfa, list(trace))[1] == want, trace


@pytest.fixture(scope="module")
def toy_product(toy_setup_module=None):
    model = toy_affine_model()
    part = toy_partition()
    samples = model.sample_noise(np.random.default_rng(0), 5000)
    nm = build_noise_model(samples, 16, eps_c=0.01, beta_c=0.01)
    ab = simplify(build_abstraction(part, model, nm, Mode.FULL, alpha=0.05))
    dfa = load_builtin_dfa("phi1")
    return model, part, ab, dfa, build_product(ab, part, dfa)


def test_product_with_trivial_dfa_is_identity(toy_setup):
    model, part, nm = toy_setup
    ab = simplify(build_abstraction(part, model, nm, Mode.FULL, alpha=0.05))
    dfa = trivial_dfa(sorted(part.atomic_propositions()))
    prod = build_product(ab, part, dfa)
    assert prod.n_nodes == part.n_states
    assert np.array_equal(prod.prod_s, np.arange(part.n_states))
    assert prod.accepting.all()


def test_product_size_and_bounds_equality(toy_product):
    model, part, ab, dfa, prod = toy_product
    assert prod.n_nodes <= part.n_states * dfa.n_states
    masks = prod.next_z
    # per the structure result, lifted pair bounds equal the base bounds on
    # matched successors and blocks
    m = model_from_product(prod)
    rng = np.random.default_rng(1)
    for _ in range(20):
        i = int(rng.integers(prod.n_nodes))
        s, z = int(prod.prod_s[i]), int(prod.prod_z[i])
        a = int(rng.integers(model.n_actions))
        base = ab.pair_view(s, a)
        lifted = _pair_bounds_product(m, s, z, a)
        nodes = prod.pidx[base.succ, masks[z, base.succ]]
        assert np.array_equal(np.sort(nodes), lifted.succ)
        order = np.argsort(nodes, kind="stable")
        assert np.allclose(base.lower[order], lifted.lower)
        assert np.allclose(base.upper[order], lifted.upper)
        assert np.allclose(base.block_lower, lifted.block_lower)
        assert np.allclose(base.block_upper, lifted.block_upper)


def test_product_unsafe_absorbing_with_z_advance(toy_product):
    model, part, ab, dfa, prod = toy_product
    unsafe = part.unsafe_index
    # the unsafe state advances z once by its own label, then self-loops
    z_trap = dfa.step(0, {"unsafe"})
    node = prod.pidx[unsafe, z_trap]
    assert node >= 0
    m = model_from_product(prod)
    pb = _pair_bounds_product(m, unsafe, int(z_trap), 0)
    assert len(pb.succ) == 1
    assert pb.succ[0] == node  # Dirac on itself once the trap is reached
    assert pb.lower[0] == pb.upper[0] == 1.0


def test_path_probability_preservation(toy_product):
    """Base adversary vertices lift to the product set and vice versa."""
    model, part, ab, dfa, prod = toy_product
    m = model_from_product(prod)
    rng = np.random.default_rng(3)
    for _ in range(15):
        i = int(rng.integers(prod.n_nodes))
        s, z = int(prod.prod_s[i]), int(prod.prod_z[i])
        if s == part.unsafe_index:
            continue
        a = int(rng.integers(model.n_actions))
        base = ab.pair_view(s, a)
        lifted = _pair_bounds_product(m, s, z, a)
        # vertex of the base set, lifted to product coordinates
        gamma_base, _ = lp_adversary(base, rng.uniform(0, 1, part.n_states))
        lift_nodes = prod.pidx[np.arange(part.n_states),
                               prod.next_z[z, np.arange(part.n_states)]]
        gamma_lift = np.zeros(prod.n_nodes)
        np.add.at(gamma_lift, lift_nodes[gamma_base > 0], gamma_base[gamma_base > 0])
        assert gamma_feasible(lifted, gamma_lift, tol=1e-7)
        # vertex of the product set, projected back to the base
        gamma_prod, _ = lp_adversary(lifted, rng.uniform(0, 1, prod.n_nodes))
        gamma_proj = np.zeros(part.n_states)
        np.add.at(gamma_proj, prod.prod_s, gamma_prod[np.arange(prod.n_nodes)])
        assert gamma_feasible(base, gamma_proj, tol=1e-7)


def test_dfa_run_agrees_with_product_walk(toy_product):
    model, part, ab, dfa, prod = toy_product
    rng = np.random.default_rng(5)
    for _ in range(50):
        s = int(rng.integers(part.n_cells))
        node = int(prod.lift[s])
        trace = [part.labels_of(s)]
        visited_accepting = bool(prod.accepting[node])
        for _ in range(12):
            s_now = int(prod.prod_s[node])
            a = int(rng.integers(model.n_actions))
            pb = ab.pair_view(s_now, a)
            nxt = int(pb.succ[rng.integers(len(pb.succ))])
            node = int(prod.pidx[nxt, prod.next_z[prod.prod_z[node], nxt]])
            trace.append(part.labels_of(nxt))
            visited_accepting |= bool(prod.accepting[node])
        _, accepted = dfa_run(dfa, trace)
        assert accepted == visited_accepting
