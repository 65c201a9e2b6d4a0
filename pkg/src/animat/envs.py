"""Task environments and neural-activity-to-command mappings.

Cartpole: classic cart/pole dynamics (pole length is the half-length
parameter), discrete-time with semi-implicit Euler, force noise, reward +1
per surviving step and -100 on failure.  Navigation: a point robot in a
unit arena (origin top-left, y downward) that turns and advances a fixed
step each iteration, rewarded by proximity to the goal.

Mappings convert a sampled firing rate into a command level using the
percentile table of the pooled non-burst rates: a single threshold at P50
(binary) or decile buckets mapped to ten levels (-1.0 .. -0.2, 0.2 .. 1.0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

NINE_THR_LEVELS = (-1.0, -0.8, -0.6, -0.4, -0.2, 0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass(frozen=True)
class CartpoleParams:
    gravity: float = 9.8
    cart_mass: float = 0.31
    pole_mass: float = 0.55
    pole_length: float = 0.4  # half-length in the dynamics equations
    track_width: float = 1.0
    step_duration: float = 0.02
    force_range: tuple = (-1.0, 1.0)
    force_noise: float = 0.02  # uniform on [-force_noise, force_noise]
    angle_limit: float = math.radians(12.0)
    max_iterations: int = 120

    def __post_init__(self):
        if min(self.cart_mass, self.pole_mass, self.pole_length,
               self.step_duration, self.track_width) <= 0:
            raise ValidationError("masses, lengths and durations must be positive")


@dataclass
class CartpoleState:
    x: float = 0.0
    x_dot: float = 0.0
    theta: float = 0.0
    theta_dot: float = 0.0

    def as_obs(self) -> np.ndarray:
        return np.array([self.x, self.x_dot, self.theta, self.theta_dot])


def cartpole_step(state: CartpoleState, force: float, params: CartpoleParams,
                  rng: np.random.Generator | None = None):
    """Advance one step; returns ``(state', reward, done)``.

    Velocities are updated from the accelerations first, then positions
    from the new velocities.  ``rng=None`` disables force noise.
    """
    vals = (state.x, state.x_dot, state.theta, state.theta_dot, force)
    if not all(math.isfinite(v) for v in vals):
        raise ValidationError("non-finite cartpole input")
    f = min(max(force, params.force_range[0]), params.force_range[1])
    if rng is not None and params.force_noise > 0:
        f += rng.uniform(-params.force_noise, params.force_noise)

    m_total = params.cart_mass + params.pole_mass
    l = params.pole_length
    sin_t = math.sin(state.theta)
    cos_t = math.cos(state.theta)
    temp = (f + params.pole_mass * l * state.theta_dot**2 * sin_t) / m_total
    theta_acc = (params.gravity * sin_t - cos_t * temp) / (
        l * (4.0 / 3.0 - params.pole_mass * cos_t**2 / m_total))
    x_acc = temp - params.pole_mass * l * theta_acc * cos_t / m_total

    dt = params.step_duration
    new = CartpoleState(
        x_dot=state.x_dot + dt * x_acc,
        theta_dot=state.theta_dot + dt * theta_acc,
    )
    new.x = state.x + dt * new.x_dot
    new.theta = state.theta + dt * new.theta_dot

    failed = abs(new.theta) > params.angle_limit or abs(new.x) > params.track_width / 2
    return new, (-100.0 if failed else 1.0), failed


@dataclass(frozen=True)
class NavParams:
    arena: float = 1.0
    step_length: float = 0.025
    dtheta_max: float = math.pi / 10
    goal: tuple = (0.7, 0.7)
    goal_radius: float = 0.1
    goal_reward: float = 50.0
    max_iterations: int = 20

    def __post_init__(self):
        if self.goal_radius <= 0 or self.step_length <= 0:
            raise ValidationError("goal radius and step length must be positive")
        if not (0 <= self.goal[0] <= self.arena and 0 <= self.goal[1] <= self.arena):
            raise ValidationError("goal must lie inside the arena")


@dataclass
class NavState:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0  # wrapped to [-pi, pi]; 0 faces +x, y grows downward

    def as_obs(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


def _wrap(theta: float) -> float:
    return math.atan2(math.sin(theta), math.cos(theta))


def nav_step(state: NavState, dtheta: float, params: NavParams):
    """Turn, advance one step length, clamp to the arena; ``(state', r, done)``."""
    if not all(math.isfinite(v) for v in (state.x, state.y, state.theta, dtheta)):
        raise ValidationError("non-finite navigation input")
    theta = _wrap(state.theta + dtheta)
    x = min(max(state.x + params.step_length * math.cos(theta), 0.0), params.arena)
    y = min(max(state.y + params.step_length * math.sin(theta), 0.0), params.arena)
    new = NavState(x=x, y=y, theta=theta)
    d = math.hypot(x - params.goal[0], y - params.goal[1])
    if d <= params.goal_radius:
        return new, params.goal_reward, True
    return new, params.goal_radius / d - 1.0, False


def map_rate_1thr(rate: float, percentiles) -> float:
    """Binary command: +1 if the rate is at or above P50, else -1."""
    return 1.0 if rate >= percentiles[5] else -1.0


def map_rate_9thr(rate: float, percentiles) -> float:
    """Ten-level command from the rate's decile bucket.

    The first bucket is the closed interval [P0, P10]; later buckets are
    half-open (P10k, P10(k+1)].  Rates outside the table saturate to the
    extreme levels.
    """
    p = percentiles
    if rate <= p[1]:  # covers rate < P0 as well (saturate low)
        return NINE_THR_LEVELS[0]
    for k in range(1, 10):
        if rate <= p[k + 1]:
            return NINE_THR_LEVELS[k]
    return NINE_THR_LEVELS[-1]


def control_mapping(rng: np.random.Generator, n_freqs: int = 5) -> int:
    """Control condition: a uniformly random frequency index, ignoring the policy."""
    return int(rng.integers(n_freqs))
