"""Run configuration: JSON schema, validation, and benchmark presets."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import AxisBox, Partition, build_grid
from .models import DynamicsModel, make_model


@dataclass
class RunConfig:
    model: dict
    partition: dict
    noise: dict
    spec: dict
    synthesis: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    output: str = "out"

    @property
    def alpha(self) -> float:
        return self.noise["alpha"]


def _require(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(f"{path}: {message}")


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, "
                              f"column {exc.colno}: {exc.msg}") from exc
    return parse_config(data)


def parse_config(data: dict) -> RunConfig:
    for block in ("model", "partition", "noise", "spec"):
        _require(block in data, block, "required configuration block is missing")
    model = data["model"]
    if isinstance(model, str):  # bare selector without parameter overrides
        model = {"kind": model}
    cfg = RunConfig(
        model=model,
        partition=data["partition"],
        noise=data["noise"],
        spec=data["spec"],
        synthesis=data.get("synthesis", {}),
        simulation=data.get("simulation", {}),
        output=data.get("output", "out"),
    )
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig):
    _require("kind" in cfg.model, "model.kind", "model kind is required")
    part = cfg.partition
    _require("safe_box" in part, "partition.safe_box", "safe box is required")
    for key in ("lower", "upper"):
        _require(key in part["safe_box"], f"partition.safe_box.{key}", "missing bound")
    _require("cells_per_dim" in part, "partition.cells_per_dim", "grid size is required")
    noise = cfg.noise
    for key in ("eps_c", "beta_c", "alpha"):
        _require(key in noise, f"noise.{key}", "required")
        if key == "eps_c" and noise[key] == "auto":
            continue
        _require(isinstance(noise[key], (int, float)) and 0.0 < noise[key] < 1.0,
                 f"noise.{key}", "must lie in (0, 1)")
    _require(noise["alpha"] > noise["beta_c"], "noise.alpha",
             "must exceed noise.beta_c (the support budget)")
    _require("samples" in noise, "noise.samples",
             "give a CSV path or {\"generate\": N}")
    _require("dfa" in cfg.spec, "spec.dfa", "DFA name or path is required")
    mode = cfg.synthesis.get("mode", "full")
    _require(mode in ("full", "support-only-imdp", "naive-imdp"),
             "synthesis.mode", f"unknown mode '{mode}'")
    adversary = cfg.synthesis.get("adversary", "two-layer")
    _require(adversary in ("two-layer", "lp"), "synthesis.adversary",
             f"unknown adversary '{adversary}'")


def build_partition(cfg: RunConfig) -> Partition:
    part = cfg.partition
    safe_box = AxisBox(np.asarray(part["safe_box"]["lower"], dtype=float),
                       np.asarray(part["safe_box"]["upper"], dtype=float))
    regions = []
    for k, reg in enumerate(part.get("regions", [])):
        _require("box" in reg and "labels" in reg, f"partition.regions[{k}]",
                 "each region needs a box and labels")
        box = AxisBox(np.asarray(reg["box"]["lower"], dtype=float),
                      np.asarray(reg["box"]["upper"], dtype=float))
        if reg.get("snap", False):
            box = snap_box(box, safe_box, np.asarray(part["cells_per_dim"]))
        regions.append((box, set(reg["labels"])))
    return build_grid(
        safe_box,
        np.asarray(part["cells_per_dim"], dtype=int),
        regions,
        np.asarray(part.get("coarse_block_shape",
                            [1] * safe_box.dim), dtype=int),
    )


def snap_box(box: AxisBox, safe_box: AxisBox, cells_per_dim: np.ndarray) -> AxisBox:
    """Snap box faces to the nearest grid lines."""
    widths = safe_box.widths / cells_per_dim
    lo = safe_box.lower + np.round((box.lower - safe_box.lower) / widths) * widths
    hi = safe_box.lower + np.round((box.upper - safe_box.lower) / widths) * widths
    return AxisBox(lo, hi)


def build_model(cfg: RunConfig) -> DynamicsModel:
    params = {k: v for k, v in cfg.model.items() if k != "kind"}
    return make_model(cfg.model["kind"], **params)


# ---------------------------------------------------------------------------
# presets mirroring the bundled case studies
# ---------------------------------------------------------------------------

def _pendulum_phi1(cells: int = 100) -> dict:
    block = 2
    if cells % block:
        raise ConfigError("pendulum grid must be even for 2x2 blocks")
    two_pi = 2.0 * math.pi
    return {
        "model": {"kind": "pendulum"},
        "partition": {
            "safe_box": {"lower": [0.0, -3.0], "upper": [two_pi, 3.0]},
            "cells_per_dim": [cells, cells],
            "coarse_block_shape": [block, block],
            "regions": [
                {"box": {"lower": [0.8 * math.pi, -0.6], "upper": [1.2 * math.pi, 0.6]},
                 "labels": ["goal"], "snap": True},
            ],
        },
        "noise": {"samples": {"generate": 100_000}, "eps_c": "auto", "beta_c": 0.01,
                  "alpha": 0.05, "n_clusters": 47, "seed": 0},
        "spec": {"dfa": "phi1"},
        "synthesis": {"mode": "full", "adversary": "two-layer",
                      "tol": 1e-6, "max_iters": 10_000},
        "simulation": {"episodes": 1000, "sampled_cells": 50, "seed": 0},
        "output": "out/pendulum-phi1",
    }


def _unicycle2d_regions() -> list:
    return [
        {"box": {"lower": [0.35, 0.40], "upper": [0.55, 0.60]}, "labels": ["water"]},
        {"box": {"lower": [0.05, 0.70], "upper": [0.25, 0.90]}, "labels": ["carpet"]},
        {"box": {"lower": [0.85, 0.85], "upper": [1.00, 1.00]}, "labels": ["charge"]},
        {"box": {"lower": [0.45, 0.10], "upper": [0.60, 0.25]}, "labels": ["unsafe"]},
    ]


def _unicycle2d_phi2(cells: int = 60) -> dict:
    return {
        "model": {"kind": "unicycle2d"},
        "partition": {
            "safe_box": {"lower": [0.0, 0.0], "upper": [1.0, 1.0]},
            "cells_per_dim": [cells, cells],
            "coarse_block_shape": [2, 2],
            "regions": _unicycle2d_regions(),
        },
        "noise": {"samples": {"generate": 10_000}, "eps_c": "auto", "beta_c": 0.01,
                  "alpha": 0.05, "n_clusters": 40, "seed": 0},
        "spec": {"dfa": "phi2"},
        "synthesis": {"mode": "full", "adversary": "two-layer",
                      "tol": 1e-6, "max_iters": 10_000},
        "simulation": {"episodes": 500, "sampled_cells": 30, "seed": 0},
        "output": "out/unicycle2d-phi2",
    }


def _unicycle2d_phi1(cells: int = 20) -> dict:
    cfg = _unicycle2d_phi2(cells)
    cfg["partition"]["regions"] = [
        {"box": {"lower": [0.85, 0.85], "upper": [1.00, 1.00]}, "labels": ["goal"]},
        {"box": {"lower": [0.45, 0.10], "upper": [0.60, 0.25]}, "labels": ["unsafe"]},
    ]
    cfg["spec"] = {"dfa": "phi1"}
    cfg["output"] = "out/unicycle2d-phi1"
    return cfg


def _unicycle3d_phi1(cells_xy: int = 39, cells_theta: int = 39, difficult: bool = False) -> dict:
    goal_hi = (10 if difficult else 14) / 39.0   # 0.256 / 0.359 snapped to the grid
    model: dict = {"kind": "unicycle3d"}
    if difficult:
        model.update({"speeds": [0.15, 0.3],
                      "noise_cov": [0.04, 0.04], "noise_ball_radius": None})
    return {
        "model": model,
        "partition": {
            "safe_box": {"lower": [0.0, 0.0, -math.pi], "upper": [1.0, 1.0, math.pi]},
            "cells_per_dim": [cells_xy, cells_xy, cells_theta],
            "coarse_block_shape": [3, 3, 3],
            "regions": [
                {"box": {"lower": [0.0, 0.0, -math.pi], "upper": [goal_hi, goal_hi, math.pi]},
                 "labels": ["goal"], "snap": True},
                {"box": {"lower": [16 / 39, 16 / 39, -math.pi],
                         "upper": [23 / 39, 23 / 39, math.pi]},
                 "labels": ["unsafe"], "snap": True},
            ],
        },
        "noise": {"samples": {"generate": 100_000}, "eps_c": 0.01, "beta_c": 0.01,
                  "alpha": 0.05, "n_clusters": 300, "seed": 0},
        "spec": {"dfa": "phi1"},
        "synthesis": {"mode": "full", "adversary": "two-layer",
                      "tol": 1e-6, "max_iters": 10_000},
        "simulation": {"episodes": 200, "sampled_cells": 20, "seed": 0},
        "output": "out/unicycle3d-difficult" if difficult else "out/unicycle3d-phi1",
    }


def _multiplicative_phi1(cells: int = 60) -> dict:
    return {
        "model": {"kind": "multiplicative"},
        "partition": {
            "safe_box": {"lower": [-1.0, -1.0], "upper": [1.0, 1.0]},
            "cells_per_dim": [cells, cells],
            "coarse_block_shape": [3, 3],
            "regions": [
                {"box": {"lower": [-0.2, -0.2], "upper": [0.2, 0.2]}, "labels": ["goal"]},
            ],
        },
        "noise": {"samples": {"generate": 46_500}, "eps_c": 0.005, "beta_c": 0.01,
                  "alpha": 0.05, "n_clusters": 230, "seed": 0},
        "spec": {"dfa": "phi1"},
        "synthesis": {"mode": "full", "adversary": "two-layer",
                      "tol": 1e-6, "max_iters": 10_000},
        "simulation": {"episodes": 500, "sampled_cells": 30, "seed": 0},
        "output": "out/multiplicative-phi1",
    }


def _heating4_phi3(cells: int = 8) -> dict:
    return {
        "model": {"kind": "heating4"},
        "partition": {
            "safe_box": {"lower": [18.5] * 4, "upper": [23.5] * 4},
            "cells_per_dim": [cells] * 4,
            "coarse_block_shape": [2] * 4,
            "regions": [],
        },
        "noise": {"samples": {"generate": 10_000}, "eps_c": 0.001, "beta_c": 0.01,
                  "alpha": 0.05, "n_clusters": 24, "seed": 0},
        "spec": {"dfa": "phi3", "horizon": 15},
        "synthesis": {"mode": "full", "adversary": "two-layer",
                      "tol": 1e-6, "max_iters": 10_000},
        "simulation": {"episodes": 200, "sampled_cells": 20, "seed": 0},
        "output": "out/heating4-phi3",
    }


PRESETS = {
    "pendulum-phi1": _pendulum_phi1,
    "unicycle2d-phi2": _unicycle2d_phi2,
    "unicycle2d-phi1": _unicycle2d_phi1,
    "unicycle3d-phi1": _unicycle3d_phi1,
    "unicycle3d-difficult": lambda **kw: _unicycle3d_phi1(difficult=True, **kw),
    "multiplicative-phi1": _multiplicative_phi1,
    "heating4-phi3": _heating4_phi3,
}


def preset_config(name: str, **overrides) -> RunConfig:
    try:
        data = PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset '{name}'; available: {sorted(PRESETS)}") from None
    data = apply_overrides(data, overrides)
    return parse_config(data)


def apply_overrides(data: dict, overrides: dict) -> dict:
    """Apply flat CLI-style overrides onto a config dictionary."""
    data = copy.deepcopy(data)
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "n_samples":
            data["noise"]["samples"] = {"generate": int(value)}
        elif key == "samples":
            data["noise"]["samples"] = value
        elif key == "mode":
            data["synthesis"]["mode"] = value
        elif key == "adversary":
            data["synthesis"]["adversary"] = value
        elif key == "n_clusters":
            data["noise"]["n_clusters"] = int(value)
        elif key == "alpha":
            data["noise"]["alpha"] = float(value)
        elif key == "seed":
            data["noise"]["seed"] = int(value)
            data["simulation"]["seed"] = int(value)
        elif key == "cells":
            dim = len(data["partition"]["cells_per_dim"])
            data["partition"]["cells_per_dim"] = [int(value)] * dim
        elif key == "output":
            data["output"] = value
        else:
            raise ConfigError(f"unknown override '{key}'")
    return data
