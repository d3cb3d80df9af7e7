"""Every bundled benchmark builds a valid abstraction end to end at toy scale."""

import numpy as np
import pytest

from umdpsyn.abstraction import Mode, build_abstraction, simplify
from umdpsyn.automata import build_product
from umdpsyn.config import build_model, build_partition, preset_config
from umdpsyn.noise import build_noise_model, resolve_eps_c
from umdpsyn.pipeline import resolve_dfa
from umdpsyn.synthesis import Bounded, robust_value_iteration

CASES = [
    ("pendulum-phi1", {"cells": 10}),
    ("unicycle2d-phi2", {"cells": 20}),
    ("unicycle2d-phi1", {"cells": 20}),
    ("unicycle3d-phi1", {"cells": 15}),
    ("unicycle3d-difficult", {"cells": 15}),
    ("multiplicative-phi1", {"cells": 30}),
    ("heating4-phi3", {"cells": 4}),
]


@pytest.mark.parametrize("preset,overrides", CASES, ids=[c[0] for c in CASES])
def test_benchmark_builds_and_iterates(preset, overrides):
    cfg = preset_config(preset, **overrides)
    part = build_partition(cfg)
    model = build_model(cfg)
    dfa = resolve_dfa(cfg)
    rng = np.random.default_rng(0)
    samples = model.sample_noise(rng, 2000)
    nm = build_noise_model(samples, target_clusters=8,
                           eps_c=resolve_eps_c("auto", 0.01, 2000), beta_c=0.01)
    # certificate validation runs inside the builder for every (s, a)
    ab = build_abstraction(part, model, nm, Mode.FULL, alpha=0.05)
    assert ab.n_states == part.n_states
    prod = build_product(simplify(ab), part, dfa)
    res = robust_value_iteration(prod, horizon=Bounded(3))
    assert np.all(res.lower.values >= 0.0)
    assert np.all(res.lower.values <= res.upper.values + 1e-12)
