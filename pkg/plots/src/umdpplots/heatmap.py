"""Cell-aligned probability heatmaps with trajectory overlays.

Consumes only the documented CSV schemas: the results table
(``state_index, region_lower_*, region_upper_*, p_lower, p_upper, action``),
trajectory files (``x_*, action, accepted``), and the partition block of a
run configuration (for goal/obstacle outlines).  Rendering is fixed-style
and timestamp-free, so re-rendering the same inputs is pixel-identical.
"""

from __future__ import annotations

import csv
import glob as globlib
import json
from dataclasses import dataclass, field

import click
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.collections import PatchCollection
from matplotlib.patches import Rectangle


class SchemaMismatch(Exception):
    """The CSV columns do not match the documented results schema."""


class EmptySlice(Exception):
    """No cell of the results table intersects the requested slice."""


OUTLINE_STYLE = {
    "unsafe": {"edgecolor": "#d62728", "linestyle": "-"},
    "goal": {"edgecolor": "#2ca02c", "linestyle": "-"},
    "charge": {"edgecolor": "#2ca02c", "linestyle": "-"},
    "water": {"edgecolor": "#1f77b4", "linestyle": "--"},
    "carpet": {"edgecolor": "#8c564b", "linestyle": "--"},
}
DEFAULT_OUTLINE = {"edgecolor": "#444444", "linestyle": ":"}


@dataclass
class PlotSpec:
    results: str
    out: str
    dims: tuple[int, int] = (0, 1)
    trajectories: str | None = None
    config: str | None = None
    slices: dict[int, float] = field(default_factory=dict)
    reduce: str = "slice"           # or "max" over the non-plotted dimensions
    value_column: str = "p_lower"
    cmap_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if len(self.dims) != 2 or self.dims[0] == self.dims[1]:
            raise ValueError("exactly two distinct plotted dimensions required")
        if self.reduce not in ("slice", "max"):
            raise ValueError("reduce must be 'slice' or 'max'")


def read_results(path: str):
    """Rows of the results table as float arrays plus the state dimension."""
    with open(path) as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        dims = sorted(int(c.rsplit("_", 1)[1]) for c in header
                      if c.startswith("region_lower_"))
        if not dims or dims != list(range(len(dims))):
            raise SchemaMismatch(f"{path}: no contiguous region_lower_* columns")
        need = ({f"region_lower_{d}" for d in dims}
                | {f"region_upper_{d}" for d in dims}
                | {"state_index", "p_lower", "p_upper"})
        missing = need - set(header)
        if missing:
            raise SchemaMismatch(f"{path}: missing columns {sorted(missing)}")
        rows = list(reader)
    n = len(dims)
    lo = np.array([[float(r[f"region_lower_{d}"]) for d in range(n)] for r in rows])
    hi = np.array([[float(r[f"region_upper_{d}"]) for d in range(n)] for r in rows])
    cols = {c: np.array([float(r[c]) for r in rows])
            for c in ("p_lower", "p_upper")}
    return lo, hi, cols, n


def select_slice(lo: np.ndarray, hi: np.ndarray, values: np.ndarray, spec: PlotSpec):
    """Project rows onto the two plotted dimensions."""
    n = lo.shape[1]
    others = [d for d in range(n) if d not in spec.dims]
    if spec.reduce == "slice":
        keep = np.ones(len(lo), dtype=bool)
        for d in others:
            if d not in spec.slices:
                raise EmptySlice(f"dimension {d} needs a slice value (or reduce='max')")
            at = spec.slices[d]
            keep &= (lo[:, d] <= at) & (at < hi[:, d])
        if not np.any(keep):
            raise EmptySlice("no cell contains the requested slice point")
        lo, hi, values = lo[keep], hi[keep], values[keep]
        i, j = spec.dims
        return lo[:, [i, j]], hi[:, [i, j]], values
    # reduce == "max": the most favorable value over the hidden dimensions
    i, j = spec.dims
    key = {}
    for k in range(len(lo)):
        cell = (lo[k, i], lo[k, j], hi[k, i], hi[k, j])
        key[cell] = max(key.get(cell, 0.0), values[k])
    cells = sorted(key)
    lo2 = np.array([[c[0], c[1]] for c in cells])
    hi2 = np.array([[c[2], c[3]] for c in cells])
    return lo2, hi2, np.array([key[c] for c in cells])


def read_trajectories(pattern: str, dims: tuple[int, int]):
    out = []
    for path in sorted(globlib.glob(pattern)):
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            continue
        if "accepted" not in rows[0] or f"x_{dims[0]}" not in rows[0]:
            raise SchemaMismatch(f"{path}: not a trajectory file")
        xs = np.array([[float(r[f"x_{dims[0]}"]), float(r[f"x_{dims[1]}"])]
                       for r in rows])
        out.append((xs, rows[0]["accepted"] in ("1", "True", "true")))
    return out


def region_outlines(config_path: str, dims: tuple[int, int]):
    with open(config_path) as fh:
        cfg = json.load(fh)
    part = cfg["partition"] if "partition" in cfg else cfg
    outlines = []
    for region in part.get("regions", []):
        lo = region["box"]["lower"]
        hi = region["box"]["upper"]
        labels = region.get("labels", [])
        style = DEFAULT_OUTLINE
        for lab in labels:
            if lab in OUTLINE_STYLE:
                style = OUTLINE_STYLE[lab]
                break
        outlines.append(((lo[dims[0]], lo[dims[1]],
                          hi[dims[0]] - lo[dims[0]], hi[dims[1]] - lo[dims[1]]),
                         ",".join(labels), style))
    return outlines


def heatmap(spec: PlotSpec):
    """Render the heatmap; returns (figure, axis) and writes ``spec.out``."""
    lo, hi, cols, n = read_results(spec.results)
    if max(spec.dims) >= n:
        raise SchemaMismatch(f"plotted dimensions {spec.dims} exceed state dimension {n}")
    if spec.value_column not in cols:
        raise SchemaMismatch(f"results table has no column {spec.value_column}")
    lo2, hi2, values = select_slice(lo, hi, cols[spec.value_column], spec)

    fig, ax = plt.subplots(figsize=(6.0, 5.0), dpi=110)
    cmap = plt.get_cmap("viridis")
    vmin, vmax = spec.cmap_range
    patches = [Rectangle((l[0], l[1]), h[0] - l[0], h[1] - l[1])
               for l, h in zip(lo2, hi2)]
    coll = PatchCollection(patches, cmap=cmap, edgecolor="none")
    coll.set_array(values)
    coll.set_clim(vmin, vmax)
    ax.add_collection(coll)
    fig.colorbar(coll, ax=ax, label=spec.value_column)

    if spec.config:
        for (x, y, w, h), label, style in region_outlines(spec.config, spec.dims):
            rect = Rectangle((x, y), w, h, facecolor="none", linewidth=1.6,
                             label=label, **style)
            rect.set_gid(f"region:{label}")
            ax.add_patch(rect)

    if spec.trajectories:
        for xs, accepted in read_trajectories(spec.trajectories, spec.dims):
            color = "#2ca02c" if accepted else "#d62728"
            ax.plot(xs[:, 0], xs[:, 1], color=color, linewidth=1.1, alpha=0.9)
            ax.plot(xs[0, 0], xs[0, 1], marker="o", color=color, markersize=3)

    ax.set_xlim(lo2[:, 0].min(), hi2[:, 0].max())
    ax.set_ylim(lo2[:, 1].min(), hi2[:, 1].max())
    ax.set_xlabel(f"x[{spec.dims[0]}]")
    ax.set_ylabel(f"x[{spec.dims[1]}]")
    ax.set_aspect("auto")
    fig.savefig(spec.out, metadata={"Software": "umdpplots"})
    return fig, ax


@click.command()
@click.option("--results", required=True, type=click.Path(exists=True),
              help="results CSV exported by the synthesis pipeline")
@click.option("--out", required=True, type=click.Path())
@click.option("--dims", nargs=2, type=int, default=(0, 1), show_default=True)
@click.option("--trajectories", default=None, help="glob of trajectory CSVs")
@click.option("--config", default=None, type=click.Path(exists=True),
              help="run configuration JSON for region outlines")
@click.option("--slice", "slices", multiple=True,
              help="fix a hidden dimension, e.g. --slice 2=0.5")
@click.option("--reduce", "reduce_mode", type=click.Choice(["slice", "max"]),
              default="slice", show_default=True)
@click.option("--value-column", default="p_lower", show_default=True)
@click.option("--cmap-range", nargs=2, type=float, default=(0.0, 1.0),
              show_default=True)
def main(results, out, dims, trajectories, config, slices, reduce_mode,
         value_column, cmap_range):
    """Render a satisfaction-probability heatmap from pipeline CSV exports."""
    parsed = {}
    for item in slices:
        d, _, v = item.partition("=")
        parsed[int(d)] = float(v)
    spec = PlotSpec(results=results, out=out, dims=tuple(dims),
                    trajectories=trajectories, config=config, slices=parsed,
                    reduce=reduce_mode, value_column=value_column,
                    cmap_range=tuple(cmap_range))
    heatmap(spec)
    click.echo(out)


if __name__ == "__main__":
    main()
