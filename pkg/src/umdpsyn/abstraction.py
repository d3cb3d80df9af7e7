"""Data-driven UMDP abstraction with two-layer transition uncertainty sets.

For every safe (state, action) pair the uncertainty set is a polytope over
distributions on the abstract states: per-successor probability intervals
on the member states of the covering coarse blocks, per-block intervals,
and a mass budget keeping at least 1 - eps_c on the covered states.  All
intervals come from empirical reach-set counts widened by a Hoeffding
epsilon; the confidence ledger accounts one beta per learned interval plus
beta_c for the learned disturbance support.
"""

from __future__ import annotations

import copy
import enum
import json
from dataclasses import dataclass, field
from math import ceil, log, sqrt

import numpy as np

from .errors import InfeasibleGamma, InsufficientSamples, ParseError
from .geometry import AxisBox, Partition, box_cell_ranges
from .models import DynamicsModel, ReachBox
from .noise import NoiseModel


class Mode(str, enum.Enum):
    """Abstraction flavor: which Gamma constraints are kept."""

    FULL = "full"                       # intervals + block intervals + mass budget
    SUPPORT_ONLY = "support-only-imdp"  # intervals + mass budget
    NAIVE = "naive-imdp"                # intervals on every state, nothing else


def hoeffding_eps(beta: float, n_samples: int) -> float:
    """Two-sided Hoeffding half-width sqrt(log(2/beta) / (2N))."""
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    return sqrt(log(2.0 / beta) / (2.0 * n_samples))


def sample_complexity(alpha: float, eps: float, eps_c: float, n_learn: int) -> int:
    """Samples needed for confidence 1-alpha at accuracy eps, support slack eps_c.

    Uses the uniform budget split beta = beta_c = alpha / n_learn; the
    Hoeffding branch keeps the factor 2 of the two-sided interval.
    """
    beta = alpha / n_learn
    n_hoeffding = log(2.0 / beta) / (2.0 * eps * eps)
    n_support = log(1.0 / beta) / log(1.0 / (1.0 - eps_c))
    return ceil(max(n_hoeffding, n_support))


# ---------------------------------------------------------------------------
# reference counting semantics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StateUnion:
    """A transition target given as a set of abstract states of a partition.

    Containment of a box in a union of cells is decided on the grid: the
    box is inside the union iff every grid cell it overlaps belongs to the
    union.  The unsafe sentinel may be a member; it stands for the
    complement of the safe box.
    """

    partition: Partition
    states: frozenset[int]


def _box_target_counts(box: ReachBox, target) -> tuple[bool, bool]:
    """(contained, intersects) of one reach box against a target."""
    if isinstance(target, AxisBox):
        return target.contains_box(box), target.intersects_box(box)
    part: Partition = target.partition
    cells = frozenset(s for s in target.states if s != part.unsafe_index)
    wants_unsafe = part.unsafe_index in target.states
    lo_idx, hi_idx, inside, outside = box_cell_ranges(
        part, box.lower[None, :], box.upper[None, :])
    inside, outside = bool(inside[0]), bool(outside[0])
    if outside:
        return wants_unsafe, wants_unsafe
    ranges = [np.arange(lo_idx[0, d], hi_idx[0, d] + 1) for d in range(part.dim)]
    mesh = np.meshgrid(*ranges, indexing="ij")
    overlapped = set(
        np.ravel_multi_index(tuple(m.ravel() for m in mesh), tuple(part.cells_per_dim)).tolist())
    intersects = bool(overlapped & cells) or ((not inside) and wants_unsafe)
    contained = overlapped <= cells and (inside or wants_unsafe)
    return contained, intersects


def empirical_counts(reach_boxes: list[ReachBox], weights, target) -> tuple[float, float]:
    """Weighted fractions of reach boxes contained in / intersecting a target.

    ``target`` is an :class:`AxisBox` or a :class:`StateUnion`.  Weights
    must sum to one (the cluster weights n_j / N).
    """
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(reach_boxes):
        raise ValueError("one weight per reach box required")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    contained = 0.0
    intersecting = 0.0
    for box, w in zip(reach_boxes, weights):
        c, i = _box_target_counts(box, target)
        contained += w * c
        intersecting += w * i
    return contained, intersecting


# ---------------------------------------------------------------------------
# abstraction container
# ---------------------------------------------------------------------------

@dataclass
class PairBounds:
    """Uncertainty-set data of one (state, action) pair.

    ``succ`` lists the constrained successors in ascending order.  Blocks
    are given by explicit member arrays so synthetic test instances need no
    partition.  When ``has_mass_budget`` the constraint
    ``sum_{succ} gamma >= 1 - eps_c`` applies (all listed successors form
    C(s, a)); absent states carry the implicit interval
    ``[0, default_upper]``.
    """

    n_states: int
    succ: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    block_members: list[np.ndarray]
    block_lower: np.ndarray
    block_upper: np.ndarray
    eps_c: float = 0.0
    has_mass_budget: bool = False
    default_upper: float = 0.0
    free_mask: np.ndarray | None = None  # where the implicit interval applies


@dataclass
class ConfidenceLedger:
    alpha: float
    beta: float
    beta_c: float
    n_learn: int


@dataclass
class UmdpAbstraction:
    """Sparse transition-bound arrays for all (state, action) pairs.

    Pairs are indexed ``s * n_actions + a``.  ``succ_*`` arrays form a CSR
    structure of per-successor intervals (successors ascending per pair);
    ``blk_*`` hold per-block intervals with ``succ_blk`` giving each
    successor's local block index (-1 for none).  The unsafe state is
    absorbing: its rows are the Dirac at itself.
    """

    n_states: int
    n_actions: int
    mode: Mode
    unsafe_state: int
    block_of_state: np.ndarray
    n_blocks: int
    eps_c: float
    epsilon: float
    ledger: ConfidenceLedger
    n_samples: int
    succ_indptr: np.ndarray
    succ_state: np.ndarray
    succ_lower: np.ndarray
    succ_upper: np.ndarray
    succ_blk: np.ndarray
    blk_indptr: np.ndarray
    blk_id: np.ndarray
    blk_lower: np.ndarray
    blk_upper: np.ndarray
    simplified: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n_pairs(self) -> int:
        return self.n_states * self.n_actions

    @property
    def default_upper(self) -> float:
        """Implicit interval upper bound for states without entries."""
        return self.epsilon if self.mode is Mode.NAIVE else 0.0

    def pair_view(self, s: int, a: int) -> PairBounds:
        p = s * self.n_actions + a
        sl = slice(self.succ_indptr[p], self.succ_indptr[p + 1])
        bl = slice(self.blk_indptr[p], self.blk_indptr[p + 1])
        succ = self.succ_state[sl]
        local = self.succ_blk[sl]
        members = [succ[local == k] for k in range(bl.stop - bl.start)]
        return PairBounds(
            n_states=self.n_states,
            succ=succ.copy(),
            lower=self.succ_lower[sl].copy(),
            upper=self.succ_upper[sl].copy(),
            block_members=members,
            block_lower=self.blk_lower[bl].copy(),
            block_upper=self.blk_upper[bl].copy(),
            eps_c=self.eps_c,
            has_mass_budget=(self.mode is not Mode.NAIVE) and not self.simplified,
            default_upper=self.default_upper,
        )

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        entries = []
        for s in range(self.n_states):
            for a in range(self.n_actions):
                p = s * self.n_actions + a
                sl = slice(self.succ_indptr[p], self.succ_indptr[p + 1])
                bl = slice(self.blk_indptr[p], self.blk_indptr[p + 1])
                entries.append({
                    "s": s, "a": a,
                    "state_bounds": [
                        [int(sp), float(lo), float(hi)] for sp, lo, hi in zip(
                            self.succ_state[sl], self.succ_lower[sl], self.succ_upper[sl])
                    ],
                    "block_bounds": [
                        [int(q), float(lo), float(hi)] for q, lo, hi in zip(
                            self.blk_id[bl], self.blk_lower[bl], self.blk_upper[bl])
                    ],
                    "eps_c": self.eps_c,
                })
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "mode": self.mode.value,
            "unsafe_state": self.unsafe_state,
            "n_blocks": self.n_blocks,
            "block_of_state": self.block_of_state.tolist(),
            "epsilon": self.epsilon,
            "n_samples": self.n_samples,
            "simplified": self.simplified,
            "confidence": {
                "alpha": self.ledger.alpha, "beta": self.ledger.beta,
                "beta_c": self.ledger.beta_c, "n_learn": self.ledger.n_learn,
            },
            "entries": entries,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "UmdpAbstraction":
        n_states = data["n_states"]
        n_actions = data["n_actions"]
        n_pairs = n_states * n_actions
        entries = sorted(data["entries"], key=lambda e: (e["s"], e["a"]))
        if len(entries) != n_pairs:
            raise ParseError("abstraction file must list every (state, action) pair")
        block_of_state = np.asarray(data["block_of_state"], dtype=np.int64)
        succ_indptr = np.zeros(n_pairs + 1, dtype=np.int64)
        blk_indptr = np.zeros(n_pairs + 1, dtype=np.int64)
        ss, slo, shi, sblk = [], [], [], []
        bq, blo, bhi = [], [], []
        eps_c = 0.0
        for e in entries:
            p = e["s"] * n_actions + e["a"]
            eps_c = e["eps_c"]
            blocks = e["block_bounds"]
            local_of_block = {int(row[0]): k for k, row in enumerate(blocks)}
            for row in e["state_bounds"]:
                sp = int(row[0])
                ss.append(sp)
                slo.append(float(row[1]))
                shi.append(float(row[2]))
                sblk.append(local_of_block.get(int(block_of_state[sp]), -1))
            for row in blocks:
                bq.append(int(row[0]))
                blo.append(float(row[1]))
                bhi.append(float(row[2]))
            succ_indptr[p + 1] = len(e["state_bounds"])
            blk_indptr[p + 1] = len(blocks)
        np.cumsum(succ_indptr, out=succ_indptr)
        np.cumsum(blk_indptr, out=blk_indptr)
        conf = data["confidence"]
        return cls(
            n_states=n_states, n_actions=n_actions, mode=Mode(data["mode"]),
            unsafe_state=data["unsafe_state"],
            block_of_state=block_of_state,
            n_blocks=data["n_blocks"], eps_c=eps_c, epsilon=data["epsilon"],
            ledger=ConfidenceLedger(conf["alpha"], conf["beta"], conf["beta_c"],
                                    conf["n_learn"]),
            n_samples=data["n_samples"],
            succ_indptr=succ_indptr,
            succ_state=np.asarray(ss, dtype=np.int64),
            succ_lower=np.asarray(slo, dtype=float),
            succ_upper=np.asarray(shi, dtype=float),
            succ_blk=np.asarray(sblk, dtype=np.int64),
            blk_indptr=blk_indptr,
            blk_id=np.asarray(bq, dtype=np.int64),
            blk_lower=np.asarray(blo, dtype=float),
            blk_upper=np.asarray(bhi, dtype=float),
            simplified=data.get("simplified", False),
        )

    def save(self, path: str):
        """Write the abstraction; .json uses the documented schema, else npz."""
        if str(path).endswith(".json"):
            with open(path, "w") as fh:
                json.dump(self.to_dict(), fh)
            return
        conf = self.ledger
        np.savez_compressed(
            path,
            header=np.array([self.n_states, self.n_actions, self.unsafe_state,
                             self.n_blocks, self.n_samples, int(self.simplified)],
                            dtype=np.int64),
            mode=np.array(self.mode.value),
            scalars=np.array([self.eps_c, self.epsilon, conf.alpha, conf.beta,
                              conf.beta_c, float(conf.n_learn)]),
            block_of_state=self.block_of_state,
            succ_indptr=self.succ_indptr, succ_state=self.succ_state,
            succ_lower=self.succ_lower, succ_upper=self.succ_upper,
            succ_blk=self.succ_blk,
            blk_indptr=self.blk_indptr, blk_id=self.blk_id,
            blk_lower=self.blk_lower, blk_upper=self.blk_upper,
        )

    @classmethod
    def load(cls, path: str) -> "UmdpAbstraction":
        if str(path).endswith(".json"):
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        with np.load(path, allow_pickle=False) as data:
            header = data["header"]
            scalars = data["scalars"]
            return cls(
                n_states=int(header[0]), n_actions=int(header[1]),
                mode=Mode(str(data["mode"])),
                unsafe_state=int(header[2]), n_blocks=int(header[3]),
                n_samples=int(header[4]), simplified=bool(header[5]),
                block_of_state=data["block_of_state"],
                eps_c=float(scalars[0]), epsilon=float(scalars[1]),
                ledger=ConfidenceLedger(float(scalars[2]), float(scalars[3]),
                                        float(scalars[4]), int(scalars[5])),
                succ_indptr=data["succ_indptr"], succ_state=data["succ_state"],
                succ_lower=data["succ_lower"], succ_upper=data["succ_upper"],
                succ_blk=data["succ_blk"],
                blk_indptr=data["blk_indptr"], blk_id=data["blk_id"],
                blk_lower=data["blk_lower"], blk_upper=data["blk_upper"],
            )


def confidence_ledger(abstraction: UmdpAbstraction) -> tuple[float, int, float, float]:
    """(alpha, n_learn, beta, beta_c), with alpha recomputed from the parts."""
    led = abstraction.ledger
    alpha = led.beta_c + (led.n_learn - 1) * led.beta
    if abs(alpha - led.alpha) > 1e-12:
        raise AssertionError(
            f"confidence ledger inconsistent: recomputed {alpha} != stored {led.alpha}")
    return led.alpha, led.n_learn, led.beta, led.beta_c


# ---------------------------------------------------------------------------
# builder
# ---------------------------------------------------------------------------

def _enumerate_ranges(lo_idx: np.ndarray, hi_idx: np.ndarray, dims):
    """Flatten per-row index hyper-rectangles into (owner_row, flat_index)."""
    m, n = lo_idx.shape
    if m == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    widths = hi_idx - lo_idx + 1
    counts = widths.prod(axis=1)
    total = int(counts.sum())
    owner = np.repeat(np.arange(m, dtype=np.int64), counts)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    r = np.arange(total, dtype=np.int64) - starts[owner]
    flat = np.zeros(total, dtype=np.int64)
    stride = 1
    for d in range(n - 1, -1, -1):
        flat += (lo_idx[owner, d] + r % widths[owner, d]) * stride
        r //= widths[owner, d]
        stride *= dims[d]
    return owner, flat


def _reduce_coo(keys: np.ndarray, cols: list[np.ndarray]):
    """Sum duplicate keys; returns sorted unique keys and reduced columns."""
    if len(keys) == 0:
        return keys, [np.zeros(0) for _ in cols]
    uniq, inv = np.unique(keys, return_inverse=True)
    out = []
    for c in cols:
        acc = np.zeros(len(uniq))
        np.add.at(acc, inv, c)
        out.append(acc)
    return uniq, out


def _map_counts(ent_keys: np.ndarray, src_keys: np.ndarray, src_vals: np.ndarray):
    """Scatter src values onto the sorted key set; missing keys are dropped."""
    out = np.zeros(len(ent_keys))
    if len(src_keys) == 0:
        return out
    pos = np.searchsorted(ent_keys, src_keys)
    ok = pos < len(ent_keys)
    ok[ok] = ent_keys[pos[ok]] == src_keys[ok]
    out[pos[ok]] = src_vals[ok]
    return out


def build_abstraction(
    partition: Partition,
    model: DynamicsModel,
    noise: NoiseModel,
    mode: Mode = Mode.FULL,
    alpha: float = 0.05,
) -> UmdpAbstraction:
    """Construct the UMDP abstraction from cluster reach-set counts.

    A first counting pass fixes the number of learned intervals
    ``n_learn = 1 + sum(|C| + |Q|)``; beta is then allocated uniformly as
    ``(alpha - beta_c) / (n_learn - 1)`` and the Hoeffding epsilon follows.
    All modes share this allocation, so their intervals coincide on C(s, a).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if mode is not Mode.NAIVE and not noise.support_satisfied:
        raise InsufficientSamples(
            f"support learning needs N >= {noise.required_samples} samples for "
            f"eps_c={noise.eps_c}, beta_c={noise.beta_c}; got N={noise.n_samples}")
    if noise.beta_c >= alpha:
        raise ValueError("alpha must exceed beta_c to leave budget for the intervals")
    if noise.dim != model.noise_dim:
        raise ValueError("noise samples and model disagree on noise dimension")
    if partition.dim != model.state_dim:
        raise ValueError("partition and model disagree on state dimension")

    n_cells = partition.n_cells
    n_states = partition.n_states
    n_actions = model.n_actions
    n_blocks = partition.n_blocks
    unsafe = partition.unsafe_index
    unsafe_block = partition.unsafe_block
    block_size = int(np.prod(partition.coarse_block_shape))
    bshape = partition.coarse_block_shape
    bdims = tuple(partition.blocks_per_dim.tolist())
    cdims = tuple(partition.cells_per_dim.tolist())
    cell_lo, cell_hi = partition.cell_bounds()

    centers, radii, weights = noise.cluster_arrays()
    # Clusters lying wholly outside the learned support ball do not extend
    # the covered set but still contribute to the empirical counts.
    in_support = (np.linalg.norm(centers, axis=1) - radii) <= noise.support_radius

    cells_arange = np.arange(n_cells, dtype=np.int64)
    si_keys, si_w = [], []             # (cell, succ cell) intersect weights per action
    sc_keys, sc_w = [], []             # (cell, succ cell) contained weights
    bi_keys, bi_w, bi_t = [], [], []   # (cell, block) intersect weights + touch marker
    bc_keys, bc_w = [], []             # (cell, block) contained weights
    ui = np.zeros((n_cells, n_actions))
    uc = np.zeros((n_cells, n_actions))

    for a in range(n_actions):
        a_si_k, a_si_w, a_sc_k, a_sc_w = [], [], [], []
        a_bi_k, a_bi_w, a_bi_t, a_bc_k, a_bc_w = [], [], [], [], []
        for j in range(len(centers)):
            w_j = weights[j]
            rlo, rhi = model.reach_many(cell_lo, cell_hi, a,
                                        centers[j] - radii[j], centers[j] + radii[j])
            lo_idx, hi_idx, inside, outside = box_cell_ranges(partition, rlo, rhi)
            ui[:, a] += w_j * (~inside)
            uc[:, a] += w_j * outside
            act = ~outside
            act_cells = cells_arange[act]
            owner, flat = _enumerate_ranges(lo_idx[act], hi_idx[act], cdims)
            a_si_k.append(act_cells[owner] * n_states + flat)
            a_si_w.append(np.full(len(flat), w_j))
            single = inside & np.all(lo_idx == hi_idx, axis=1)
            if np.any(single):
                flat_sc = np.ravel_multi_index(tuple(lo_idx[single].T), cdims)
                a_sc_k.append(cells_arange[single] * n_states + flat_sc)
                a_sc_w.append(np.full(len(flat_sc), w_j))
            blo = lo_idx[act] // bshape
            bhi = hi_idx[act] // bshape
            owner_b, flat_b = _enumerate_ranges(blo, bhi, bdims)
            a_bi_k.append(act_cells[owner_b] * n_blocks + flat_b)
            a_bi_w.append(np.full(len(flat_b), w_j))
            a_bi_t.append(np.full(len(flat_b), float(in_support[j])))
            single_b = inside & np.all((lo_idx // bshape) == (hi_idx // bshape), axis=1)
            if np.any(single_b):
                flat_bc = np.ravel_multi_index(tuple((lo_idx[single_b] // bshape).T), bdims)
                a_bc_k.append(cells_arange[single_b] * n_blocks + flat_bc)
                a_bc_w.append(np.full(len(flat_bc), w_j))

        def _rebase(keys, radix):
            return (keys // radix * n_actions + a) * radix + keys % radix

        keys, (wsum,) = _reduce_coo(np.concatenate(a_si_k), [np.concatenate(a_si_w)])
        si_keys.append(_rebase(keys, n_states))
        si_w.append(wsum)
        if a_sc_k:
            keys, (wsum,) = _reduce_coo(np.concatenate(a_sc_k), [np.concatenate(a_sc_w)])
            sc_keys.append(_rebase(keys, n_states))
            sc_w.append(wsum)
        keys, (wsum, tsum) = _reduce_coo(
            np.concatenate(a_bi_k), [np.concatenate(a_bi_w), np.concatenate(a_bi_t)])
        bi_keys.append(_rebase(keys, n_blocks))
        bi_w.append(wsum)
        bi_t.append(tsum)
        if a_bc_k:
            keys, (wsum,) = _reduce_coo(np.concatenate(a_bc_k), [np.concatenate(a_bc_w)])
            bc_keys.append(_rebase(keys, n_blocks))
            bc_w.append(wsum)

    si_keys = np.concatenate(si_keys)
    si_w = np.concatenate(si_w)
    sc_keys = np.concatenate(sc_keys) if sc_keys else np.empty(0, dtype=np.int64)
    sc_w = np.concatenate(sc_w) if sc_w else np.empty(0)
    bi_keys = np.concatenate(bi_keys)
    bi_w = np.concatenate(bi_w)
    bi_t = np.concatenate(bi_t)
    bc_keys = np.concatenate(bc_keys) if bc_keys else np.empty(0, dtype=np.int64)
    bc_w = np.concatenate(bc_w) if bc_w else np.empty(0)

    # fold the unsafe-region counts in, both as a state and as its block
    pair_of_cell = cells_arange[:, None] * n_actions + np.arange(n_actions)[None, :]
    nz = ui > 0
    si_keys = np.concatenate([si_keys, pair_of_cell[nz] * n_states + unsafe])
    si_w = np.concatenate([si_w, ui[nz]])
    bi_keys = np.concatenate([bi_keys, pair_of_cell[nz] * n_blocks + unsafe_block])
    bi_w = np.concatenate([bi_w, ui[nz]])
    bi_t = np.concatenate([bi_t, np.ones(int(nz.sum()))])
    nzc = uc > 0
    sc_keys = np.concatenate([sc_keys, pair_of_cell[nzc] * n_states + unsafe])
    sc_w = np.concatenate([sc_w, uc[nzc]])
    bc_keys = np.concatenate([bc_keys, pair_of_cell[nzc] * n_blocks + unsafe_block])
    bc_w = np.concatenate([bc_w, uc[nzc]])

    si_keys, (si_w,) = _reduce_coo(si_keys, [si_w])
    sc_keys, (sc_w,) = _reduce_coo(sc_keys, [sc_w])
    bi_keys, (bi_w, bi_t) = _reduce_coo(bi_keys, [bi_w, bi_t])
    bc_keys, (bc_w,) = _reduce_coo(bc_keys, [bc_w])

    # --- covering blocks Q(s, a), C(s, a) sizes, beta allocation ----------
    touched = bi_t > 0
    tb_keys = bi_keys[touched]
    tb_i = bi_w[touched]
    tb_pair = tb_keys // n_blocks
    tb_block = tb_keys % n_blocks
    tb_size = np.where(tb_block == unsafe_block, 1, block_size)
    q_count = np.bincount(tb_pair, minlength=n_states * n_actions)
    c_size = np.bincount(tb_pair, weights=tb_size.astype(float),
                         minlength=n_states * n_actions)
    n_learn = 1 + int(q_count.sum()) + int(round(c_size.sum()))
    beta = (alpha - noise.beta_c) / (n_learn - 1)
    epsilon = hoeffding_eps(beta, noise.n_samples)

    # --- successor entry set ----------------------------------------------
    bidx_of_cell = np.ravel_multi_index(
        tuple(np.stack(np.unravel_index(cells_arange, cdims), axis=1).T // bshape[:, None]),
        bdims)
    members_of_block = cells_arange[np.argsort(bidx_of_cell, kind="stable")].reshape(
        unsafe_block, block_size) if unsafe_block > 0 else np.zeros((0, block_size), np.int64)

    if mode is Mode.NAIVE:
        ent_keys = si_keys
    else:
        # C(s, a): all member states of the covering blocks (entry even when
        # no reach box touches the member: its learned interval is [0, eps])
        safe_rows = tb_block != unsafe_block
        parts = [tb_pair[~safe_rows] * n_states + unsafe]
        parts.append((tb_pair[safe_rows, None] * n_states
                      + members_of_block[tb_block[safe_rows]]).ravel())
        ent_keys = np.unique(np.concatenate(parts))

    ent_i = _map_counts(ent_keys, si_keys, si_w)
    ent_c = _map_counts(ent_keys, sc_keys, sc_w)
    ent_pair = ent_keys // n_states
    ent_state = ent_keys % n_states

    succ_lower = np.clip(ent_c - epsilon, 0.0, 1.0)
    succ_upper = np.clip(ent_i + epsilon, 0.0, 1.0)

    # --- block rows (full mode keeps them) --------------------------------
    if mode is Mode.FULL:
        blk_c = _map_counts(tb_keys, bc_keys, bc_w)
        blk_pair = tb_pair
        blk_block = tb_block
        blk_lower = np.clip(blk_c - epsilon, 0.0, 1.0)
        blk_upper = np.clip(tb_i + epsilon, 0.0, 1.0)
    else:
        blk_pair = np.empty(0, dtype=np.int64)
        blk_block = np.empty(0, dtype=np.int64)
        blk_lower = np.empty(0)
        blk_upper = np.empty(0)

    # --- absorbing unsafe rows (Dirac at itself) ---------------------------
    unsafe_pairs = unsafe * n_actions + np.arange(n_actions, dtype=np.int64)
    ent_pair = np.concatenate([ent_pair, unsafe_pairs])
    ent_state = np.concatenate([ent_state, np.full(n_actions, unsafe, dtype=np.int64)])
    succ_lower = np.concatenate([succ_lower, np.ones(n_actions)])
    succ_upper = np.concatenate([succ_upper, np.ones(n_actions)])

    order = np.argsort(ent_pair * np.int64(n_states) + ent_state, kind="stable")
    ent_pair, ent_state = ent_pair[order], ent_state[order]
    succ_lower, succ_upper = succ_lower[order], succ_upper[order]

    n_pairs = n_states * n_actions
    succ_indptr = np.zeros(n_pairs + 1, dtype=np.int64)
    np.add.at(succ_indptr, ent_pair + 1, 1)
    np.cumsum(succ_indptr, out=succ_indptr)

    border = np.argsort(blk_pair * np.int64(n_blocks) + blk_block, kind="stable")
    blk_pair, blk_block = blk_pair[border], blk_block[border]
    blk_lower, blk_upper = blk_lower[border], blk_upper[border]
    blk_indptr = np.zeros(n_pairs + 1, dtype=np.int64)
    np.add.at(blk_indptr, blk_pair + 1, 1)
    np.cumsum(blk_indptr, out=blk_indptr)

    block_of_state = partition.block_of_state()
    if mode is Mode.FULL and len(blk_block) > 0:
        blk_sorted_keys = blk_pair * np.int64(n_blocks) + blk_block
        want = ent_pair * np.int64(n_blocks) + block_of_state[ent_state]
        pos = np.searchsorted(blk_sorted_keys, want)
        ok = pos < len(blk_sorted_keys)
        ok[ok] = blk_sorted_keys[pos[ok]] == want[ok]
        succ_blk = np.where(ok, pos - blk_indptr[ent_pair], -1).astype(np.int64)
    else:
        succ_blk = np.full(len(ent_state), -1, dtype=np.int64)

    ledger = ConfidenceLedger(alpha=alpha, beta=beta, beta_c=noise.beta_c, n_learn=n_learn)
    abstraction = UmdpAbstraction(
        n_states=n_states, n_actions=n_actions, mode=mode, unsafe_state=unsafe,
        block_of_state=block_of_state, n_blocks=n_blocks,
        eps_c=noise.eps_c, epsilon=epsilon, ledger=ledger, n_samples=noise.n_samples,
        succ_indptr=succ_indptr, succ_state=ent_state,
        succ_lower=succ_lower, succ_upper=succ_upper, succ_blk=succ_blk,
        blk_indptr=blk_indptr, blk_id=blk_block,
        blk_lower=blk_lower, blk_upper=blk_upper,
    )
    validate_certificates(abstraction)
    return abstraction


def validate_certificates(ab: UmdpAbstraction):
    """Nonemptiness certificates of every uncertainty set; raises on failure."""
    tol = 1e-9
    n_pairs = ab.n_pairs
    counts = np.diff(ab.succ_indptr)
    pair_of_entry = np.repeat(np.arange(n_pairs), counts)
    safe = (np.arange(n_pairs) // ab.n_actions) != ab.unsafe_state

    def _fail(mask, message):
        bad = np.flatnonzero(mask)
        if len(bad):
            p = int(bad[0])
            raise InfeasibleGamma(
                f"{message} at state {p // ab.n_actions}, action {p % ab.n_actions}")

    if np.any(ab.succ_lower > ab.succ_upper + tol):
        k = int(np.argmax(ab.succ_lower - ab.succ_upper))
        _fail(np.arange(n_pairs) == pair_of_entry[k], "lower exceeds upper")
    sum_upper = np.bincount(pair_of_entry, weights=ab.succ_upper, minlength=n_pairs)
    sum_lower = np.bincount(pair_of_entry, weights=ab.succ_lower, minlength=n_pairs)
    total_upper = sum_upper + ab.default_upper * (ab.n_states - counts)
    budget = 1.0 if (ab.mode is Mode.NAIVE or ab.simplified) else 1.0 - ab.eps_c
    _fail(safe & (total_upper < budget - tol), f"sum of upper bounds below {budget}")
    _fail(safe & (sum_lower > 1.0 + tol), "sum of lower bounds exceeds 1")

    if len(ab.blk_id):
        has_block = ab.succ_blk >= 0
        row = ab.blk_indptr[pair_of_entry[has_block]] + ab.succ_blk[has_block]
        m = len(ab.blk_id)
        member_upper = np.bincount(row, weights=ab.succ_upper[has_block], minlength=m)
        member_lower = np.bincount(row, weights=ab.succ_lower[has_block], minlength=m)
        pair_of_block = np.repeat(np.arange(n_pairs), np.diff(ab.blk_indptr))
        bad = ab.blk_lower > member_upper + tol
        if np.any(bad):
            _fail(np.arange(n_pairs) == pair_of_block[np.argmax(bad)],
                  "block lower exceeds member uppers")
        bad = ab.blk_upper < member_lower - tol
        if np.any(bad):
            _fail(np.arange(n_pairs) == pair_of_block[np.argmax(bad)],
                  "block upper below member lowers")


def simplify(ab: UmdpAbstraction) -> UmdpAbstraction:
    """Fold the mass budget into the bounds, dropping the sum-over-C constraint.

    Adds eps_c to the unsafe state's upper bound (creating the entry with
    lower 0 if absent) and to every block containing the unsafe state;
    successors outside C(s, a) and the unsafe state keep the implicit upper
    bound 0.  The naive mode has no mass budget and is copied unchanged.
    """
    if ab.simplified:
        raise ValueError("abstraction is already simplified")
    out = copy.copy(ab)
    out.simplified = True
    if ab.mode is Mode.NAIVE:
        return out

    n_actions = ab.n_actions
    unsafe = ab.unsafe_state
    n_pairs = ab.n_pairs
    pair_of_entry = np.repeat(np.arange(n_pairs), np.diff(ab.succ_indptr))
    has_unsafe = np.zeros(n_pairs, dtype=bool)
    has_unsafe[pair_of_entry[ab.succ_state == unsafe]] = True
    safe_pair = (np.arange(n_pairs) // n_actions) != unsafe
    needs_entry = safe_pair & ~has_unsafe

    counts = np.diff(ab.succ_indptr) + needs_entry.astype(np.int64)
    succ_indptr = np.zeros(n_pairs + 1, dtype=np.int64)
    np.cumsum(counts, out=succ_indptr[1:])
    total = int(succ_indptr[-1])
    succ_state = np.empty(total, dtype=np.int64)
    succ_lower = np.empty(total)
    succ_upper = np.empty(total)
    succ_blk = np.empty(total, dtype=np.int64)

    # copy old entries shifted; the unsafe state is the largest index, so
    # appending it to each pair keeps successors ascending
    shift = np.repeat(succ_indptr[:-1] - ab.succ_indptr[:-1], np.diff(ab.succ_indptr))
    dst = np.arange(len(ab.succ_state)) + shift
    succ_state[dst] = ab.succ_state
    succ_lower[dst] = ab.succ_lower
    succ_upper[dst] = ab.succ_upper
    succ_blk[dst] = ab.succ_blk
    new_slots = succ_indptr[1:][needs_entry] - 1
    succ_state[new_slots] = unsafe
    succ_lower[new_slots] = 0.0
    succ_upper[new_slots] = 0.0
    succ_blk[new_slots] = -1

    pair_of_entry = np.repeat(np.arange(n_pairs), counts)
    unsafe_rows = (succ_state == unsafe) & ((pair_of_entry // n_actions) != unsafe)
    succ_upper[unsafe_rows] = np.minimum(1.0, succ_upper[unsafe_rows] + ab.eps_c)

    blk_upper = ab.blk_upper.copy()
    unsafe_blocks = ab.blk_id == ab.block_of_state[unsafe]
    blk_upper[unsafe_blocks] = np.minimum(1.0, blk_upper[unsafe_blocks] + ab.eps_c)

    out.succ_indptr = succ_indptr
    out.succ_state = succ_state
    out.succ_lower = succ_lower
    out.succ_upper = succ_upper
    out.succ_blk = succ_blk
    out.blk_upper = blk_upper
    return out
