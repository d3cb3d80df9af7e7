"""Data-driven UMDP abstraction and robust strategy synthesis toolkit."""

from .abstraction import (Mode, PairBounds, UmdpAbstraction, build_abstraction,
                          confidence_ledger, empirical_counts, hoeffding_eps,
                          sample_complexity, simplify)
from .automata import Dfa, ProductUmdp, build_product, dfa_run, load_builtin_dfa, load_dfa
from .geometry import AxisBox, Partition, build_grid
from .models import DynamicsModel, ReachBox, make_model, reach_overapprox
from .noise import NoiseModel, build_noise_model, cluster_samples, learn_support, load_samples
from .simulate import TrajectoryRecord, simulate, sweep_initial_states
from .synthesis import (Bounded, Controller, Strategy, SynthesisResult, Unbounded,
                        ValueFunction, lp_adversary, o_maximize_2layer,
                        refine_strategy, robust_value_iteration)

__all__ = [
    "AxisBox", "Bounded", "Controller", "Dfa", "DynamicsModel", "Mode",
    "NoiseModel", "PairBounds", "Partition", "ProductUmdp", "ReachBox",
    "Strategy", "SynthesisResult", "TrajectoryRecord", "UmdpAbstraction",
    "Unbounded", "ValueFunction", "build_abstraction", "build_grid",
    "build_noise_model", "build_product", "cluster_samples",
    "confidence_ledger", "dfa_run", "empirical_counts", "hoeffding_eps",
    "learn_support", "load_builtin_dfa", "load_dfa", "load_samples",
    "lp_adversary", "make_model", "o_maximize_2layer", "reach_overapprox",
    "refine_strategy", "robust_value_iteration", "sample_complexity",
    "simplify", "simulate", "sweep_initial_states",
]
