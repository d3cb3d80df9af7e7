"""DFA ingestion and the product construction over the abstraction.

DFAs arrive as JSON files (translation from temporal-logic formulas is an
external concern); the product keeps references into the base transition
bounds, mapping successors through the DFA step on their labels, so no
bounds are recomputed or copied.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .abstraction import UmdpAbstraction
from .errors import IncompleteTransition, NondeterministicEdge, ParseError, UnknownProposition
from .geometry import Partition


@dataclass
class Dfa:
    """Deterministic finite automaton over label sets of atomic propositions.

    ``delta`` is total: one row per state, one column per subset of ``ap``
    encoded as a bitmask (bit k set iff ap[k] in the label set).
    """

    ap: list[str]
    n_states: int
    initial: int
    accepting: frozenset[int]
    delta: np.ndarray  # (n_states, 2**len(ap))

    def mask_of(self, labels) -> int:
        mask = 0
        for prop in labels:
            try:
                mask |= 1 << self.ap.index(prop)
            except ValueError:
                raise UnknownProposition(
                    f"proposition '{prop}' is not in the DFA alphabet {self.ap}") from None
        return mask

    def step(self, z: int, labels) -> int:
        return int(self.delta[z, self.mask_of(labels)])


def dfa_run(dfa: Dfa, trace: list) -> tuple[int, bool]:
    """Run a trace of label sets; acceptance latches on the first accepting visit."""
    z = dfa.initial
    accepted = z in dfa.accepting
    for labels in trace:
        z = dfa.step(z, labels)
        accepted = accepted or z in dfa.accepting
    return z, accepted


def _edge_matches(label_spec: dict, mask: int, ap: list[str]) -> bool:
    for prop, wanted in label_spec.items():
        bit = (mask >> ap.index(prop)) & 1
        if bool(bit) != bool(wanted):
            return False
    return True


def dfa_from_dict(data: dict) -> Dfa:
    try:
        ap = list(data["ap"])
        n_states = int(data["states"])
        initial = int(data["initial"])
        accepting = frozenset(int(z) for z in data["accepting"])
        edges = data["edges"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed DFA description: {exc}") from exc
    for edge in edges:
        if edge["label"] != "else":
            for prop in edge["label"]:
                if prop not in ap:
                    raise UnknownProposition(
                        f"edge label uses '{prop}' outside the alphabet {ap}")
    n_masks = 1 << len(ap)
    delta = np.full((n_states, n_masks), -1, dtype=np.int64)
    for z in range(n_states):
        out = [e for e in edges if int(e["from"]) == z]
        else_to = None
        for e in out:
            if e["label"] == "else":
                if else_to is not None and int(e["to"]) != else_to:
                    raise NondeterministicEdge(f"state {z} has two else-edges")
                else_to = int(e["to"])
        for mask in range(n_masks):
            targets = {int(e["to"]) for e in out
                       if e["label"] != "else" and _edge_matches(e["label"], mask, ap)}
            if len(targets) > 1:
                labels = {ap[k] for k in range(len(ap)) if (mask >> k) & 1}
                raise NondeterministicEdge(
                    f"state {z} has conflicting edges for label set {labels or '{}'}")
            if targets:
                delta[z, mask] = targets.pop()
            elif else_to is not None:
                delta[z, mask] = else_to
            else:
                labels = {ap[k] for k in range(len(ap)) if (mask >> k) & 1}
                raise IncompleteTransition(
                    f"state {z} has no edge for label set {labels or '{}'} and no else-edge")
    return Dfa(ap=ap, n_states=n_states, initial=initial, accepting=accepting, delta=delta)


def load_dfa(path: str) -> Dfa:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return dfa_from_dict(data)


def load_builtin_dfa(name: str) -> Dfa:
    """DFA shipped with the package: 'phi1', 'phi2', or 'phi3'."""
    ref = resources.files("umdpsyn").joinpath(f"data/dfa/{name}.json")
    return dfa_from_dict(json.loads(ref.read_text()))


def trivial_dfa(ap: list[str] | None = None) -> Dfa:
    """One accepting state with self-loops: every trace is accepted."""
    ap = ap or []
    return Dfa(ap=ap, n_states=1, initial=0, accepting=frozenset({0}),
               delta=np.zeros((1, 1 << len(ap)), dtype=np.int64))


def safety_counter_dfa(horizon: int) -> Dfa:
    """Counter automaton for bounded safety over an absorbing unsafe region.

    Accepts once horizon + 1 safe labels have been read (positions
    0..horizon).  An unsafe label self-loops, which never reaches
    acceptance on traces of length <= horizon + 1 and, for systems whose
    unsafe region is absorbing, on any trace.
    """
    n = horizon + 2  # counters 0..horizon + 1, the last one accepting
    delta = np.zeros((n, 2), dtype=np.int64)
    for z in range(n - 1):
        delta[z, 0] = z + 1   # safe label: count up
        delta[z, 1] = z       # unsafe label: stay
    delta[n - 1, :] = n - 1
    return Dfa(ap=["unsafe"], n_states=n, initial=0,
               accepting=frozenset({n - 1}), delta=delta)


# ---------------------------------------------------------------------------
# product
# ---------------------------------------------------------------------------

@dataclass
class ProductUmdp:
    """Synchronous composition of the abstraction with a DFA.

    Product node i corresponds to ``(prod_s[i], prod_z[i])``; ``pidx`` maps
    (base state, DFA state) back to node index (-1 if unreachable).  Bounds
    live in the referenced abstraction: the pair ((s, z), a) has successor
    (s', delta(z, L(s'))) with the base interval of s', and block bounds of
    the lifted blocks equal the base block bounds.
    """

    abstraction: UmdpAbstraction
    dfa: Dfa
    prod_s: np.ndarray
    prod_z: np.ndarray
    pidx: np.ndarray    # (n_base_states, |Z|)
    next_z: np.ndarray  # (|Z|, n_base_states)
    accepting: np.ndarray
    lift: np.ndarray    # base state -> product node of (s, delta(z0, L(s)))

    @property
    def n_nodes(self) -> int:
        return len(self.prod_s)


def state_label_masks(partition: Partition, dfa: Dfa) -> np.ndarray:
    """Label bitmask of every abstract state in the DFA's alphabet."""
    masks = np.zeros(partition.n_states, dtype=np.int64)
    for s in range(partition.n_states):
        masks[s] = dfa.mask_of(partition.labels_of(s))
    return masks


def build_product(ab: UmdpAbstraction, partition: Partition, dfa: Dfa) -> ProductUmdp:
    """Forward-reachable product from every lifted initial state."""
    props = partition.atomic_propositions()
    missing = props - set(dfa.ap)
    if missing:
        raise UnknownProposition(
            f"partition propositions {sorted(missing)} missing from the DFA alphabet")
    n_states = ab.n_states
    n_z = dfa.n_states
    masks = state_label_masks(partition, dfa)
    next_z = dfa.delta[:, masks]  # (n_z, n_states)

    # union of successors over all actions, per base state
    pair_succ = ab.succ_state
    pair_of_entry = np.repeat(np.arange(ab.n_pairs), np.diff(ab.succ_indptr))
    keys = np.unique((pair_of_entry // ab.n_actions) * np.int64(n_states) + pair_succ)
    base_of = keys // n_states
    succ_of = keys % n_states
    succ_indptr = np.zeros(n_states + 1, dtype=np.int64)
    np.add.at(succ_indptr, base_of + 1, 1)
    np.cumsum(succ_indptr, out=succ_indptr)

    visited = np.zeros((n_states, n_z), dtype=bool)
    lift_z = next_z[dfa.initial, :]
    visited[np.arange(n_states), lift_z] = True
    frontier_s = np.arange(n_states, dtype=np.int64)
    frontier_z = lift_z.astype(np.int64)
    while len(frontier_s):
        counts = succ_indptr[frontier_s + 1] - succ_indptr[frontier_s]
        owner = np.repeat(np.arange(len(frontier_s)), counts)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        flat = np.arange(int(counts.sum())) - starts[owner] + succ_indptr[frontier_s][owner]
        sp = succ_of[flat]
        zp = next_z[frontier_z[owner], sp]
        keys = np.unique(sp * np.int64(n_z) + zp)
        sp, zp = keys // n_z, keys % n_z
        new = ~visited[sp, zp]
        visited[sp[new], zp[new]] = True
        frontier_s, frontier_z = sp[new], zp[new]

    prod_s, prod_z = np.nonzero(visited)  # lexicographic, deterministic
    pidx = np.full((n_states, n_z), -1, dtype=np.int64)
    pidx[prod_s, prod_z] = np.arange(len(prod_s))
    acc = np.zeros(n_z, dtype=bool)
    acc[list(dfa.accepting)] = True
    return ProductUmdp(
        abstraction=ab, dfa=dfa,
        prod_s=prod_s.astype(np.int64), prod_z=prod_z.astype(np.int64),
        pidx=pidx, next_z=next_z.astype(np.int64),
        accepting=acc[prod_z],
        lift=pidx[np.arange(n_states), lift_z],
    )
