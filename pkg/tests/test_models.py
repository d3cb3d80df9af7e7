import numpy as np
import pytest

from umdpsyn import intervals as iv
from umdpsyn.geometry import AxisBox
from umdpsyn.models import (affine, heating4, make_model, multiplicative,
                            pendulum, reach_overapprox, unicycle2d, unicycle3d)

BENCHMARKS = {
    "pendulum": (pendulum(), [0.0, -3.0], [2 * np.pi, 3.0], 1.0),
    "unicycle3d": (unicycle3d(), [0.0, 0.0, -np.pi], [1.0, 1.0, np.pi], 1.2),
    "unicycle2d": (unicycle2d(), [0.0, 0.0], [1.0, 1.0], 1.4),
    "multiplicative": (multiplicative(), [-1.0, -1.0], [1.0, 1.0], 0.2),
    "heating4": (heating4(), [18.5] * 4, [23.5] * 4, 0.02),
}


def test_interval_trig_enclosure():
    rng = np.random.default_rng(1)
    lo = rng.uniform(-8, 8, 200)
    hi = lo + rng.uniform(0, 5, 200)
    for fn, ref in ((iv.isin, np.sin), (iv.icos, np.cos)):
        out_lo, out_hi = fn((lo, hi))
        for k in range(200):
            xs = np.linspace(lo[k], hi[k], 97)
            vals = ref(xs)
            assert out_lo[k] <= vals.min() + 1e-12
            assert out_hi[k] >= vals.max() - 1e-12


def test_interval_signsq_monotone():
    lo, hi = iv.isignsq((np.array([-2.0, 0.5]), np.array([1.0, 3.0])))
    assert lo.tolist() == [-4.0, 0.25]
    assert hi.tolist() == [1.0, 9.0]


def test_step_deterministic():
    model = pendulum()
    x = np.array([[1.0, 0.5]])
    w = np.array([[0.2]])
    once = model.step(x, 2, w)
    again = model.step(x, 2, w)
    assert np.array_equal(once, again)


def test_reach_point_region_zero_radius():
    # radius 0 and a point region: the box degenerates to the exact image
    model = toy = affine(a_matrix=[[0.5]], controls=[[0.0]])
    x = np.array([0.4])
    box = reach_overapprox(toy, (x, x), 0, np.array([0.1]), 0.0)
    exact = model.step(x[None, :], 0, np.array([[0.1]]))[0]
    assert np.allclose(box.lower, exact) and np.allclose(box.upper, exact)


def test_reach_linear_exact_interval():
    # x' = 0.5 x + w on r = [0, 1], center 0, radius 0.2 -> [-0.2, 0.7]
    model = affine(a_matrix=[[0.5]], controls=[[0.0]])
    box = reach_overapprox(model, AxisBox(np.array([0.0]), np.array([1.0])), 0,
                           np.array([0.0]), 0.2)
    assert np.allclose(box.lower, [-0.2]) and np.allclose(box.upper, [0.7])


@pytest.mark.parametrize("name", sorted(BENCHMARKS))
def test_reach_hook_soundness(name):
    # sampled witnesses of 100 random (region, action, noise ball) triples
    model, lo, hi, max_rad = BENCHMARKS[name]
    lo, hi = np.asarray(lo), np.asarray(hi)
    rng = np.random.default_rng(hash(name) % 2**32)
    for _ in range(100):
        blo = rng.uniform(lo, hi - 0.05 * (hi - lo))
        bhi = blo + rng.uniform(0.01, 0.05, size=len(lo)) * (hi - lo)
        region = AxisBox(blo, bhi)
        a = int(rng.integers(model.n_actions))
        center = model.sample_noise(rng, 1)[0]
        radius = float(rng.uniform(0, max_rad))
        box = reach_overapprox(model, region, a, center, radius)
        xs = rng.uniform(region.lower, region.upper, size=(100, model.state_dim))
        dirs = rng.standard_normal((100, model.noise_dim))
        dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-12)
        ws = center + dirs * rng.uniform(0, radius, size=(100, 1))
        ys = model.step(xs, a, ws)
        assert np.all(ys >= box.lower - 1e-9), f"{name}: witness below the reach box"
        assert np.all(ys <= box.upper + 1e-9), f"{name}: witness above the reach box"


def test_lipschitz_fallback_sound_on_pendulum():
    model = pendulum()
    blind = pendulum()
    blind.reach_fn = None  # force the generic Lipschitz fallback
    rng = np.random.default_rng(9)
    region = AxisBox(np.array([1.0, 0.2]), np.array([1.3, 0.5]))
    for a in range(model.n_actions):
        center = np.array([0.1])
        box = reach_overapprox(blind, region, a, center, 0.2)
        xs = rng.uniform(region.lower, region.upper, size=(100, 2))
        ws = center + rng.uniform(-0.2, 0.2, size=(100, 1))
        ys = model.step(xs, a, ws)
        assert np.all(ys >= box.lower - 1e-9) and np.all(ys <= box.upper + 1e-9)
        # the fallback box contains the exact-hook box
        tight = reach_overapprox(model, region, a, center, 0.2)
        assert np.all(box.lower <= tight.lower + 1e-12)
        assert np.all(box.upper >= tight.upper - 1e-12)


def test_make_model_rejects_unknown_kind():
    from umdpsyn.errors import ConfigError
    with pytest.raises(ConfigError):
        make_model("rocket")


def test_truncated_sampler_respects_bounds():
    model = unicycle2d()
    rng = np.random.default_rng(4)
    w = model.sample_noise(rng, 5000)
    assert w.shape == (5000, 1)
    assert w.min() >= -0.6 and w.max() <= 1.4
    model3 = unicycle3d()
    w3 = model3.sample_noise(rng, 2000)
    assert np.all(np.linalg.norm(w3 - np.array([0.4, 0.0]), axis=1) <= 1.0 + 1e-12)
