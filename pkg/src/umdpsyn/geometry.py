"""Axis-aligned grid partition of the safe set and the region/state bijection.

The safe set is a box partitioned into a uniform grid of half-open cells
[lo, hi) (the top face of the safe box is closed).  Abstract state k is grid
cell k in C-order; the last abstract state is the absorbing unsafe region,
the complement of the safe box, stored as a sentinel without geometry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IndivisibleBlocks, MisalignedRegion

# Snap tolerance, in units of one cell: coordinates this close to the next
# grid line are treated as lying on it, so exact cell corners index
# deterministically into the higher cell per the half-open convention.
_SNAP = 1e-9

UNSAFE_PROP = "unsafe"


@dataclass(frozen=True)
class AxisBox:
    """Nonempty axis-aligned box given by per-dimension lower/upper bounds."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if not np.all(lo < hi):
            raise ValueError(f"box has empty interior: lower={lo}, upper={hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def contains_box(self, other: "AxisBox") -> bool:
        return bool(np.all(other.lower >= self.lower) and np.all(other.upper <= self.upper))

    def intersects_box(self, other: "AxisBox") -> bool:
        return bool(np.all(other.lower <= self.upper) and np.all(other.upper >= self.lower))


def _snap_floor(q: np.ndarray) -> np.ndarray:
    """floor(q), with values within _SNAP below an integer snapped up."""
    idx = np.floor(q)
    snap = (q - idx) > 1.0 - _SNAP
    return (idx + snap).astype(np.int64)


@dataclass
class Partition:
    """Uniform labeled grid over the safe box plus the unsafe sentinel state.

    Cells are indexed in C-order over the per-dimension grid indices; the
    unsafe state is the last index ``n_cells``.  Immutable after
    construction and safe to share across workers.
    """

    safe_box: AxisBox
    cells_per_dim: np.ndarray
    coarse_block_shape: np.ndarray
    label_sets: list[frozenset[str]]
    cell_label_id: np.ndarray  # (n_cells,) index into label_sets
    regions_of_interest: list[tuple[AxisBox, frozenset[str]]] = field(default_factory=list)

    def __post_init__(self):
        self.cells_per_dim = np.asarray(self.cells_per_dim, dtype=np.int64)
        self.coarse_block_shape = np.asarray(self.coarse_block_shape, dtype=np.int64)
        self.cell_widths = self.safe_box.widths / self.cells_per_dim
        self.n_cells = int(np.prod(self.cells_per_dim))
        self.blocks_per_dim = self.cells_per_dim // self.coarse_block_shape
        self.n_safe_blocks = int(np.prod(self.blocks_per_dim))

    # -- state indexing ------------------------------------------------

    @property
    def dim(self) -> int:
        return self.safe_box.dim

    @property
    def n_states(self) -> int:
        """Number of abstract states, unsafe sentinel included."""
        return self.n_cells + 1

    @property
    def unsafe_index(self) -> int:
        return self.n_cells

    @property
    def n_blocks(self) -> int:
        """Coarse blocks covering all states; the unsafe block is last."""
        return self.n_safe_blocks + 1

    @property
    def unsafe_block(self) -> int:
        return self.n_safe_blocks

    def cell_box(self, index: int) -> AxisBox:
        if not 0 <= index < self.n_cells:
            raise IndexError(f"cell index {index} out of range")
        multi = np.array(np.unravel_index(index, self.cells_per_dim))
        lo = self.safe_box.lower + multi * self.cell_widths
        return AxisBox(lo, lo + self.cell_widths)

    def cell_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower/upper corners of every cell, shape (n_cells, dim) each."""
        grids = np.unravel_index(np.arange(self.n_cells), self.cells_per_dim)
        multi = np.stack(grids, axis=1)
        lo = self.safe_box.lower + multi * self.cell_widths
        return lo, lo + self.cell_widths

    def cell_centers(self) -> np.ndarray:
        lo, hi = self.cell_bounds()
        return 0.5 * (lo + hi)

    # -- labels ----------------------------------------------------------

    def labels_of(self, state: int) -> frozenset[str]:
        if state == self.unsafe_index:
            return frozenset({UNSAFE_PROP})
        return self.label_sets[self.cell_label_id[state]]

    def atomic_propositions(self) -> frozenset[str]:
        props: set[str] = {UNSAFE_PROP}
        for ls in self.label_sets:
            props |= ls
        return frozenset(props)

    # -- point location ---------------------------------------------------

    def locate(self, x: np.ndarray) -> int:
        """Abstract state whose region contains x (unsafe if outside X)."""
        return int(self.locate_many(np.asarray(x, dtype=float)[None, :])[0])

    def locate_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        lo, hi = self.safe_box.lower, self.safe_box.upper
        outside = np.any(xs < lo, axis=1) | np.any(xs > hi, axis=1)
        q = (xs - lo) / self.cell_widths
        idx = _snap_floor(q)
        np.clip(idx, 0, self.cells_per_dim - 1, out=idx)
        flat = np.ravel_multi_index(tuple(idx.T), tuple(self.cells_per_dim))
        return np.where(outside, self.unsafe_index, flat)

    # -- coarse clustering ------------------------------------------------

    def block_of_cell(self) -> np.ndarray:
        """Coarse block index of each cell, shape (n_cells,)."""
        grids = np.unravel_index(np.arange(self.n_cells), self.cells_per_dim)
        multi = np.stack(grids, axis=1) // self.coarse_block_shape
        return np.ravel_multi_index(tuple(multi.T), tuple(self.blocks_per_dim))

    def block_of_state(self) -> np.ndarray:
        """Coarse block of each abstract state; unsafe is its own block."""
        out = np.empty(self.n_states, dtype=np.int64)
        out[: self.n_cells] = self.block_of_cell()
        out[self.unsafe_index] = self.unsafe_block
        return out

    def coarse_clusters(self) -> list[set[int]]:
        """Blocks as sets of state indices; the unsafe singleton is last."""
        blocks: list[set[int]] = [set() for _ in range(self.n_blocks)]
        for state, b in enumerate(self.block_of_state()):
            blocks[b].add(state)
        return blocks

    def block_union_box(self, block: int) -> AxisBox:
        """Bounding box of a safe block (equals the union, blocks are rectangular)."""
        if not 0 <= block < self.n_safe_blocks:
            raise IndexError(f"safe block index {block} out of range")
        multi = np.array(np.unravel_index(block, self.blocks_per_dim))
        lo = self.safe_box.lower + multi * self.coarse_block_shape * self.cell_widths
        return AxisBox(lo, lo + self.coarse_block_shape * self.cell_widths)


def _check_alignment(value: float, lo: float, width: float, what: str, tol: float = 1e-12):
    k = round((value - lo) / width)
    if abs(lo + k * width - value) > tol:
        raise MisalignedRegion(
            f"{what} coordinate {value} is not on a grid line "
            f"(nearest line {lo + k * width}); snap it to the grid first"
        )


def build_grid(
    safe_box: AxisBox,
    cells_per_dim,
    regions_of_interest: list[tuple[AxisBox, set[str]]] | None = None,
    coarse_block_shape=None,
) -> Partition:
    """Build a uniform labeled grid partition of the safe box.

    Every region of interest must be an exact union of grid cells: its
    boundaries must lie on grid lines within 1e-12 (absolute, state units).
    Cells receive the labels of every region containing them.
    """
    cells_per_dim = np.asarray(cells_per_dim, dtype=np.int64)
    if cells_per_dim.shape != (safe_box.dim,) or np.any(cells_per_dim < 1):
        raise ValueError("cells_per_dim must have one entry >= 1 per dimension")
    if coarse_block_shape is None:
        coarse_block_shape = np.ones(safe_box.dim, dtype=np.int64)
    coarse_block_shape = np.asarray(coarse_block_shape, dtype=np.int64)
    if np.any(coarse_block_shape < 1) or coarse_block_shape.shape != (safe_box.dim,):
        raise ValueError("coarse_block_shape must have one entry >= 1 per dimension")
    if np.any(cells_per_dim % coarse_block_shape != 0):
        raise IndivisibleBlocks(
            f"grid {cells_per_dim.tolist()} not divisible by blocks {coarse_block_shape.tolist()}"
        )

    regions_of_interest = regions_of_interest or []
    widths = safe_box.widths / cells_per_dim
    n_cells = int(np.prod(cells_per_dim))
    cell_label_id = np.zeros(n_cells, dtype=np.int64)
    label_sets: list[frozenset[str]] = [frozenset()]
    cell_labels: dict[int, set[str]] = {}

    stored_regions: list[tuple[AxisBox, frozenset[str]]] = []
    for box, labels in regions_of_interest:
        if not safe_box.contains_box(box):
            raise ValueError(f"region of interest {box} is not inside the safe box")
        ranges = []
        for d in range(safe_box.dim):
            _check_alignment(box.lower[d], safe_box.lower[d], widths[d], "region lower")
            _check_alignment(box.upper[d], safe_box.lower[d], widths[d], "region upper")
            k_lo = round((box.lower[d] - safe_box.lower[d]) / widths[d])
            k_hi = round((box.upper[d] - safe_box.lower[d]) / widths[d])
            ranges.append(np.arange(k_lo, k_hi))
        mesh = np.meshgrid(*ranges, indexing="ij")
        flat = np.ravel_multi_index(tuple(m.ravel() for m in mesh), tuple(cells_per_dim))
        for c in flat:
            cell_labels.setdefault(int(c), set()).update(labels)
        stored_regions.append((box, frozenset(labels)))

    interned: dict[frozenset[str], int] = {frozenset(): 0}
    for c, labels in cell_labels.items():
        key = frozenset(labels)
        if key not in interned:
            interned[key] = len(label_sets)
            label_sets.append(key)
        cell_label_id[c] = interned[key]

    return Partition(
        safe_box=safe_box,
        cells_per_dim=cells_per_dim,
        coarse_block_shape=coarse_block_shape,
        label_sets=label_sets,
        cell_label_id=cell_label_id,
        regions_of_interest=stored_regions,
    )


def box_cell_ranges(partition: Partition, lo: np.ndarray, hi: np.ndarray):
    """Grid index ranges overlapped by boxes, plus inside/outside flags.

    Parameters are (M, dim) arrays of box corners.  Returns
    ``(lo_idx, hi_idx, wholly_inside, wholly_outside)`` with index ranges
    clipped to the grid.  Faces landing on a grid line follow the
    half-open cell convention: a lower face on a line belongs to the upper
    cell, and an upper face on a line does not claim the upper cell (the
    box is the image of a half-open region, so the touching face carries
    no mass).
    """
    slo, shi = partition.safe_box.lower, partition.safe_box.upper
    w = partition.cell_widths
    npd = partition.cells_per_dim
    wholly_inside = np.all(lo >= slo, axis=1) & np.all(hi <= shi, axis=1)
    wholly_outside = np.any(hi < slo, axis=1) | np.any(lo > shi, axis=1)
    lo_idx = _snap_floor((lo - slo) / w)
    q_hi = (hi - slo) / w
    nearest = np.round(q_hi)
    on_line = np.abs(q_hi - nearest) <= _SNAP
    hi_idx = np.where(on_line, nearest.astype(np.int64) - 1,
                      np.floor(q_hi).astype(np.int64))
    hi_idx = np.maximum(hi_idx, lo_idx)  # degenerate boxes on a line stay put
    np.clip(lo_idx, 0, npd - 1, out=lo_idx)
    np.clip(hi_idx, 0, npd - 1, out=hi_idx)
    return lo_idx, hi_idx, wholly_inside, wholly_outside
