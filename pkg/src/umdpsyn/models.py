"""Benchmark system dynamics, disturbance distributions, and reach hooks.

Each model bundles a deterministic step function f(x, u, w), a finite
control set, Lipschitz constants, a sampler for the configured ground-truth
disturbance distribution, and (for every bundled benchmark) an exact
reachable-set over-approximator based on interval arithmetic.  The generic
Lipschitz fallback in :func:`reach_overapprox` covers models without a hook.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import intervals as iv
from .errors import ConfigError
from .geometry import AxisBox


@dataclass
class ReachBox:
    """Axis-aligned over-approximation of a reachable set (may be degenerate)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if np.any(self.lower > self.upper):
            raise ValueError("reach box has lower > upper")

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


# reach_fn(cell_lo (M,n), cell_hi (M,n), u (m,), w_lo (d,), w_hi (d,)) -> (lo, hi)
ReachFn = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray],
                   tuple[np.ndarray, np.ndarray]]


@dataclass
class DynamicsModel:
    """Discrete-time stochastic system with a finite control set.

    ``step`` is pure and deterministic; identical inputs give identical
    outputs.  Immutable after construction.
    """

    name: str
    state_dim: int
    noise_dim: int
    controls: np.ndarray  # (|U|, control_dim)
    step_fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    lipschitz_w: np.ndarray  # per control, Lipschitz constant in w
    lipschitz_x: np.ndarray  # per control, Lipschitz constant in x
    noise_sampler: Callable[[np.random.Generator, int], np.ndarray]
    reach_fn: ReachFn | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.controls = np.atleast_2d(np.asarray(self.controls, dtype=float))
        self.lipschitz_w = np.asarray(self.lipschitz_w, dtype=float)
        self.lipschitz_x = np.asarray(self.lipschitz_x, dtype=float)
        if len(self.controls) < 1:
            raise ValueError("control set must be nonempty")
        if np.any(self.lipschitz_w <= 0):
            raise ValueError("Lipschitz constants in w must be positive")

    @property
    def n_actions(self) -> int:
        return len(self.controls)

    def step(self, x: np.ndarray, action: int, w: np.ndarray) -> np.ndarray:
        """Next states for a batch of (state, disturbance) pairs."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        w = np.atleast_2d(np.asarray(w, dtype=float))
        return self.step_fn(x, self.controls[action], w)

    def sample_noise(self, rng: np.random.Generator, size: int) -> np.ndarray:
        out = self.noise_sampler(rng, size)
        return out.reshape(size, self.noise_dim)

    def reach_many(self, cell_lo, cell_hi, action: int, w_lo, w_hi):
        """Reach boxes of many cells under one action and a noise box."""
        u = self.controls[action]
        if self.reach_fn is not None:
            return self.reach_fn(cell_lo, cell_hi, u, w_lo, w_hi)
        center = 0.5 * (cell_lo + cell_hi)
        w_center = 0.5 * (w_lo + w_hi)
        radius = 0.5 * float(np.linalg.norm(w_hi - w_lo))
        y0 = self.step_fn(center, u, np.broadcast_to(w_center, (len(center), self.noise_dim)))
        half = np.linalg.norm(0.5 * (cell_hi - cell_lo), axis=1) * self.lipschitz_x[action]
        half = half + self.lipschitz_w[action] * radius
        return y0 - half[:, None], y0 + half[:, None]


def reach_overapprox(model: DynamicsModel, region, action: int,
                     center: np.ndarray, radius: float) -> ReachBox:
    """Over-approximate the image of a region under one noise ball.

    The noise ball {w : ||w - center|| <= radius} is enclosed in its
    bounding box before the interval hook is applied.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if isinstance(region, AxisBox):
        lo, hi = region.lower, region.upper
    else:
        lo, hi = (np.asarray(r, dtype=float) for r in region)
    center = np.asarray(center, dtype=float)
    out_lo, out_hi = model.reach_many(lo[None, :], hi[None, :], action,
                                      center - radius, center + radius)
    return ReachBox(out_lo[0], out_hi[0])


# ---------------------------------------------------------------------------
# ground-truth disturbance samplers
# ---------------------------------------------------------------------------

def _truncated_normal(mean, std, low, high):
    mean, std = float(mean), float(std)

    def sample(rng: np.random.Generator, size: int) -> np.ndarray:
        out = np.empty(size)
        have = 0
        while have < size:
            draw = rng.normal(mean, std, size=2 * (size - have) + 16)
            draw = draw[(draw >= low) & (draw <= high)]
            take = min(len(draw), size - have)
            out[have:have + take] = draw[:take]
            have += take
        return out[:, None]

    return sample


def _ball_truncated_normal(mean, cov_diag, ball_radius):
    mean = np.asarray(mean, dtype=float)
    std = np.sqrt(np.asarray(cov_diag, dtype=float))

    def sample(rng: np.random.Generator, size: int) -> np.ndarray:
        d = len(mean)
        out = np.empty((size, d))
        have = 0
        while have < size:
            draw = mean + std * rng.standard_normal((2 * (size - have) + 16, d))
            keep = np.linalg.norm(draw - mean, axis=1) <= ball_radius
            draw = draw[keep]
            take = min(len(draw), size - have)
            out[have:have + take] = draw[:take]
            have += take
        return out

    return sample


def _normal(mean, cov_diag):
    mean = np.asarray(mean, dtype=float)
    std = np.sqrt(np.asarray(cov_diag, dtype=float))

    def sample(rng: np.random.Generator, size: int) -> np.ndarray:
        return mean + std * rng.standard_normal((size, len(mean)))

    return sample


# ---------------------------------------------------------------------------
# benchmark models
# ---------------------------------------------------------------------------

def pendulum(dt=0.25, drag=0.3, length=1.0, torque_max=0.8, n_controls=5,
             noise_std=0.2, noise_bound=1.0) -> DynamicsModel:
    """Planar pendulum swing-up under a horizontal wind disturbance.

    State is (angle from the downward vertical, angular velocity); the wind
    speed w produces a drag torque quadratic in the blade-relative velocity
    length*dtheta - w*cos(theta).
    """
    controls = np.linspace(-torque_max, torque_max, n_controls)[:, None]

    def step(x, u, w):
        theta, dtheta = x[:, 0], x[:, 1]
        v = length * dtheta - w[:, 0] * np.cos(theta)
        acc = -drag * np.sign(v) * v * v - np.sin(theta) + u[0]
        return np.stack([theta + dt * dtheta, dtheta + dt * acc], axis=1)

    def _dth_next_at(dth_fix, th, wiv, torque):
        """Interval of the next angular velocity for a fixed current one."""
        v = iv.isub(iv.iscale((dth_fix, dth_fix), length), iv.imul(wiv, iv.icos(th)))
        acc = iv.ishift(iv.isub(iv.iscale(iv.isignsq(v), -drag), iv.isin(th)), torque)
        return iv.iadd((dth_fix, dth_fix), iv.iscale(acc, dt))

    def reach(cell_lo, cell_hi, u, w_lo, w_hi):
        th = (cell_lo[:, 0], cell_hi[:, 0])
        dth = (cell_lo[:, 1], cell_hi[:, 1])
        wiv = (np.full_like(th[0], w_lo[0]), np.full_like(th[0], w_hi[0]))
        th_next = iv.iadd(th, iv.iscale(dth, dt))
        # The velocity map is monotone in the current velocity wherever the
        # drag slope dt*drag*2*l*|v| stays below 1, so evaluating at the
        # velocity endpoints avoids the double occurrence of dth.
        w_abs = max(abs(w_lo[0]), abs(w_hi[0]))
        v_max = length * np.maximum(np.abs(dth[0]), np.abs(dth[1])) + w_abs
        monotone = dt * drag * 2.0 * length * v_max <= 1.0
        at_lo = _dth_next_at(dth[0], th, wiv, u[0])
        at_hi = _dth_next_at(dth[1], th, wiv, u[0])
        dn_lo = np.minimum(at_lo[0], at_hi[0])
        dn_hi = np.maximum(at_lo[1], at_hi[1])
        v = iv.isub(iv.iscale(dth, length), iv.imul(wiv, iv.icos(th)))
        acc = iv.ishift(iv.isub(iv.iscale(iv.isignsq(v), -drag), iv.isin(th)), u[0])
        wide = iv.iadd(dth, iv.iscale(acc, dt))
        dth_next = (np.where(monotone, dn_lo, wide[0]),
                    np.where(monotone, dn_hi, wide[1]))
        return (np.stack([th_next[0], dth_next[0]], axis=1),
                np.stack([th_next[1], dth_next[1]], axis=1))

    # |d f2 / d w| = dt*drag*2|v||cos| <= dt*drag*2*(length*|dtheta| + |w|)
    lw = dt * drag * 2.0 * (length * 4.0 + noise_bound + 1.0)
    n_u = len(controls)
    return DynamicsModel(
        name="pendulum", state_dim=2, noise_dim=1, controls=controls,
        step_fn=step, reach_fn=reach,
        lipschitz_w=np.full(n_u, lw),
        lipschitz_x=np.full(n_u, 1.0 + dt * (1.0 + drag * 2.0 * (4.0 + noise_bound))),
        noise_sampler=_truncated_normal(0.0, noise_std, -noise_bound, noise_bound),
        params={"dt": dt, "drag": drag, "length": length},
    )


def unicycle3d(dt=0.5, drag=(0.1, 0.05), speeds=(0.21, 0.3),
               yaw_rates=(-2.0, -1.0, 0.0, 1.0, 2.0),
               noise_mean=(0.4, 0.0), noise_cov=(0.067 ** 2, 0.067 ** 2),
               noise_ball_radius=1.0) -> DynamicsModel:
    """Kinematic unicycle (x, y, heading) under Coulomb-friction noise."""
    controls = np.array([[s, r] for s in speeds for r in yaw_rates])
    cd1, cd2 = drag

    def step(x, u, w):
        speed = u[0] - cd1 * w[:, 0]
        th = x[:, 2]
        return np.stack([
            x[:, 0] + dt * speed * np.cos(th),
            x[:, 1] + dt * speed * np.sin(th),
            x[:, 2] + dt * u[1] + cd2 * w[:, 1],
        ], axis=1)

    def reach(cell_lo, cell_hi, u, w_lo, w_hi):
        th = (cell_lo[:, 2], cell_hi[:, 2])
        w1 = (np.full_like(th[0], w_lo[0]), np.full_like(th[0], w_hi[0]))
        speed = iv.ishift(iv.iscale(w1, -cd1), u[0])
        dx = iv.iscale(iv.imul(speed, iv.icos(th)), dt)
        dy = iv.iscale(iv.imul(speed, iv.isin(th)), dt)
        x_next = iv.iadd((cell_lo[:, 0], cell_hi[:, 0]), dx)
        y_next = iv.iadd((cell_lo[:, 1], cell_hi[:, 1]), dy)
        th_next = iv.ishift(th, dt * u[1])
        th_next = (th_next[0] + cd2 * w_lo[1], th_next[1] + cd2 * w_hi[1])
        return (np.stack([x_next[0], y_next[0], th_next[0]], axis=1),
                np.stack([x_next[1], y_next[1], th_next[1]], axis=1))

    n_u = len(controls)
    sampler = (_ball_truncated_normal(noise_mean, noise_cov, noise_ball_radius)
               if noise_ball_radius is not None else _normal(noise_mean, noise_cov))
    return DynamicsModel(
        name="unicycle3d", state_dim=3, noise_dim=2, controls=controls,
        step_fn=step, reach_fn=reach,
        lipschitz_w=np.full(n_u, dt * cd1 + cd2),
        lipschitz_x=np.full(n_u, 1.0 + dt * max(speeds)),
        noise_sampler=sampler,
        params={"dt": dt, "drag": list(drag)},
    )


def unicycle2d(dt=0.5, drag=0.2, speed=0.3, n_headings=8,
               noise_mean=0.4, noise_std=0.067,
               noise_low=-0.6, noise_high=1.4) -> DynamicsModel:
    """Planar unicycle with the heading angle as the control input."""
    controls = (-np.pi + 2.0 * np.pi * np.arange(n_headings) / n_headings)[:, None]

    def step(x, u, w):
        v = dt * (speed - drag * w[:, 0])
        return np.stack([x[:, 0] + v * np.cos(u[0]), x[:, 1] + v * np.sin(u[0])], axis=1)

    def reach(cell_lo, cell_hi, u, w_lo, w_hi):
        v = (dt * (speed - drag * w_hi[0]), dt * (speed - drag * w_lo[0]))
        c, s = np.cos(u[0]), np.sin(u[0])
        dx = (min(v[0] * c, v[1] * c), max(v[0] * c, v[1] * c))
        dy = (min(v[0] * s, v[1] * s), max(v[0] * s, v[1] * s))
        return (np.stack([cell_lo[:, 0] + dx[0], cell_lo[:, 1] + dy[0]], axis=1),
                np.stack([cell_hi[:, 0] + dx[1], cell_hi[:, 1] + dy[1]], axis=1))

    n_u = len(controls)
    return DynamicsModel(
        name="unicycle2d", state_dim=2, noise_dim=1, controls=controls,
        step_fn=step, reach_fn=reach,
        lipschitz_w=np.full(n_u, dt * drag * np.sqrt(2.0)),
        lipschitz_x=np.full(n_u, 1.0),
        noise_sampler=_truncated_normal(noise_mean, noise_std, noise_low, noise_high),
        params={"dt": dt, "drag": drag, "speed": speed},
    )


def multiplicative(a_matrix=((0.55, 0.1), (0.1, 0.55)),
                   noise_cov=(0.05 ** 2, 0.05 ** 2)) -> DynamicsModel:
    """Uncontrolled 2-D linear system with multiplicative noise."""
    A = np.asarray(a_matrix, dtype=float)

    def step(x, u, w):
        return (1.0 + w) * (x @ A.T)

    def reach(cell_lo, cell_hi, u, w_lo, w_hi):
        y = iv.imatvec(A, (cell_lo, cell_hi))
        lo, hi = iv.imul((1.0 + w_lo, 1.0 + w_hi), y)
        return lo, hi

    return DynamicsModel(
        name="multiplicative", state_dim=2, noise_dim=2,
        controls=np.zeros((1, 1)), step_fn=step, reach_fn=reach,
        lipschitz_w=np.array([float(np.linalg.norm(A, 2)) * 2.0]),
        lipschitz_x=np.array([float(np.linalg.norm(A, 2)) * 1.1]),
        noise_sampler=_normal((0.0, 0.0), noise_cov),
        params={"A": A.tolist()},
    )


_HEAT_A = np.array([
    [0.901, 0.0625, 0.0, 0.0],
    [0.0625, 0.839, 0.0625, 0.0],
    [0.0, 0.0625, 0.839, 0.0625],
    [0.0, 0.0, 0.0625, 0.901],
])


def heating4(noise_cov=1.11e-5, heater_gain=0.7, bias=0.219) -> DynamicsModel:
    """Four-room thermal regulation with multiplicative disturbance.

    Controls are the 16 on/off vectors of the four radiators.
    """
    controls = np.array([[(k >> i) & 1 for i in range(4)] for k in range(16)], dtype=float)
    b = np.full(4, bias)

    def step(x, u, w):
        return (1.0 + w) * (x @ _HEAT_A.T) + b + heater_gain * u

    def reach(cell_lo, cell_hi, u, w_lo, w_hi):
        y = iv.imatvec(_HEAT_A, (cell_lo, cell_hi))
        lo, hi = iv.imul((1.0 + w_lo, 1.0 + w_hi), y)
        off = b + heater_gain * u
        return lo + off, hi + off

    n_u = len(controls)
    # |x| stays below ~24 on the safe set; w enters as w * (A x).
    return DynamicsModel(
        name="heating4", state_dim=4, noise_dim=4, controls=controls,
        step_fn=step, reach_fn=reach,
        lipschitz_w=np.full(n_u, 25.0),
        lipschitz_x=np.full(n_u, 1.1),
        noise_sampler=_normal(np.zeros(4), np.full(4, noise_cov)),
        params={"heater_gain": heater_gain},
    )


def affine(a_matrix, b_matrix=None, w_matrix=None, offset=None, controls=None,
           noise_mean=0.0, noise_std=1.0, noise_low=None, noise_high=None,
           name="affine") -> DynamicsModel:
    """Custom affine system x' = A x + B u + C w + offset with exact hook."""
    A = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    n = A.shape[0]
    B = np.zeros((n, 1)) if b_matrix is None else np.atleast_2d(np.asarray(b_matrix, dtype=float))
    C = np.eye(n) if w_matrix is None else np.atleast_2d(np.asarray(w_matrix, dtype=float))
    c0 = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    controls = np.zeros((1, B.shape[1])) if controls is None else np.atleast_2d(np.asarray(controls, dtype=float))
    d = C.shape[1]

    def step(x, u, w):
        return x @ A.T + (B @ u) + w @ C.T + c0

    def reach(cell_lo, cell_hi, u, w_lo, w_hi):
        y = iv.imatvec(A, (cell_lo, cell_hi))
        wlo, whi = iv.imatvec(C, (w_lo[None, :], w_hi[None, :]))
        off = B @ u + c0
        return y[0] + wlo[0] + off, y[1] + whi[0] + off

    if noise_low is not None:
        if d != 1:
            raise ConfigError("truncated noise for the affine model requires noise_dim 1")
        sampler = _truncated_normal(noise_mean, noise_std, noise_low, noise_high)
    else:
        mean = np.broadcast_to(np.asarray(noise_mean, dtype=float), (d,))
        cov = np.broadcast_to(np.asarray(noise_std, dtype=float) ** 2, (d,))
        sampler = _normal(mean, cov)

    n_u = len(controls)
    return DynamicsModel(
        name=name, state_dim=n, noise_dim=d, controls=controls,
        step_fn=step, reach_fn=reach,
        lipschitz_w=np.full(n_u, max(float(np.linalg.norm(C, 2)), 1e-12)),
        lipschitz_x=np.full(n_u, float(np.linalg.norm(A, 2))),
        noise_sampler=sampler,
        params={"A": A.tolist()},
    )


MODEL_BUILDERS = {
    "pendulum": pendulum,
    "unicycle2d": unicycle2d,
    "unicycle3d": unicycle3d,
    "multiplicative": multiplicative,
    "heating4": heating4,
    "custom": affine,
}


def make_model(kind: str, **params) -> DynamicsModel:
    try:
        builder = MODEL_BUILDERS[kind]
    except KeyError:
        raise ConfigError(
            f"unknown model '{kind}'; expected one of {sorted(MODEL_BUILDERS)}") from None
    return builder(**params)
