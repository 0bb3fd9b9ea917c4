"""Classic-control tasks: mountain car, cart-pole and acrobot.

Dynamics follow the standard classic-control reference formulations. Every
environment is deterministic given its seed, reports termination (a true
terminal state) separately from truncation (the step limit), and clamps the
emitted observation to its declared bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "EnvSpec",
    "StepResult",
    "StepAfterEnd",
    "Environment",
    "MountainCar",
    "CartPole",
    "Acrobot",
    "ENV_NAMES",
    "make",
    "spec_for",
    "solved",
]

SOLVE_WINDOW = 100


class StepAfterEnd(RuntimeError):
    """``step`` was called after the episode terminated or was truncated."""


@dataclass(frozen=True)
class EnvSpec:
    name: str
    observation_dim: int
    low: tuple[float, ...]
    high: tuple[float, ...]
    action_count: int
    max_steps: int
    solve_threshold: float
    solve_window: int = SOLVE_WINDOW

    def __post_init__(self) -> None:
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if not (len(self.low) == len(self.high) == self.observation_dim):
            raise ValueError("bounds do not match observation_dim")
        if not all(math.isfinite(v) for v in self.low + self.high):
            raise ValueError("observation bounds must be finite")


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated


class Environment:
    """Shared reset/step bookkeeping; subclasses supply the physics."""

    spec: EnvSpec

    def __init__(self) -> None:
        self.rng = np.random.default_rng()
        self.state = np.zeros(0)
        self.steps = 0
        self.finished = True

    def reset(self, seed: int | None = None) -> np.ndarray:
        """Start an episode; a seed reseeds the generator, None continues it."""
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.state = self._initial_state()
        self.steps = 0
        self.finished = False
        return self._observe()

    def step(self, action: int) -> StepResult:
        if self.finished:
            raise StepAfterEnd(f"{self.spec.name}: episode already finished, call reset()")
        if not 0 <= int(action) < self.spec.action_count:
            raise ValueError(f"action {action} out of range for {self.spec.name}")
        reward, terminated = self._advance(int(action))
        self.steps += 1
        truncated = not terminated and self.steps >= self.spec.max_steps
        self.finished = terminated or truncated
        return StepResult(self._observe(), reward, terminated, truncated)

    def _observe(self) -> np.ndarray:
        return np.clip(self._raw_observation(), self.spec.low, self.spec.high)

    def _raw_observation(self) -> np.ndarray:
        return self.state.copy()

    def _initial_state(self) -> np.ndarray:
        raise NotImplementedError

    def _advance(self, action: int) -> tuple[float, bool]:
        raise NotImplementedError


class MountainCar(Environment):
    min_position = -1.2
    max_position = 0.6
    max_speed = 0.07
    goal_position = 0.5
    force = 0.001
    gravity = 0.0025

    spec = EnvSpec(
        name="mountain_car_v0",
        observation_dim=2,
        low=(-1.2, -0.07),
        high=(0.6, 0.07),
        action_count=3,
        max_steps=200,
        solve_threshold=-110.0,
    )

    def _initial_state(self) -> np.ndarray:
        return np.array([self.rng.uniform(-0.6, -0.4), 0.0])

    def _advance(self, action: int) -> tuple[float, bool]:
        position, velocity = self.state
        velocity += (action - 1) * self.force - math.cos(3.0 * position) * self.gravity
        velocity = min(max(velocity, -self.max_speed), self.max_speed)
        position += velocity
        position = min(max(position, self.min_position), self.max_position)
        if position == self.min_position and velocity < 0.0:
            velocity = 0.0
        self.state = np.array([position, velocity])
        return -1.0, bool(position >= self.goal_position)


class CartPole(Environment):
    gravity = 9.8
    masscart = 1.0
    masspole = 0.1
    total_mass = masscart + masspole
    length = 0.5
    polemass_length = masspole * length
    force_mag = 10.0
    tau = 0.02
    theta_threshold = 12.0 * 2.0 * math.pi / 360.0
    x_threshold = 2.4

    def __init__(self, version: int = 0, cart_velocity_cap: float = 3.0, pole_velocity_cap: float = 4.0):
        super().__init__()
        max_steps, threshold = (200, 195.0) if version == 0 else (500, 475.0)
        self.spec = EnvSpec(
            name=f"cartpole_v{version}",
            observation_dim=4,
            low=(-2 * self.x_threshold, -cart_velocity_cap, -2 * self.theta_threshold, -pole_velocity_cap),
            high=(2 * self.x_threshold, cart_velocity_cap, 2 * self.theta_threshold, pole_velocity_cap),
            action_count=2,
            max_steps=max_steps,
            solve_threshold=threshold,
        )

    def _initial_state(self) -> np.ndarray:
        return self.rng.uniform(-0.05, 0.05, size=4)

    def _advance(self, action: int) -> tuple[float, bool]:
        x, x_dot, theta, theta_dot = self.state
        force = self.force_mag if action == 1 else -self.force_mag
        costheta = math.cos(theta)
        sintheta = math.sin(theta)
        temp = (force + self.polemass_length * theta_dot**2 * sintheta) / self.total_mass
        thetaacc = (self.gravity * sintheta - costheta * temp) / (
            self.length * (4.0 / 3.0 - self.masspole * costheta**2 / self.total_mass)
        )
        xacc = temp - self.polemass_length * thetaacc * costheta / self.total_mass
        x = x + self.tau * x_dot
        x_dot = x_dot + self.tau * xacc
        theta = theta + self.tau * theta_dot
        theta_dot = theta_dot + self.tau * thetaacc
        self.state = np.array([x, x_dot, theta, theta_dot])
        terminated = abs(x) > self.x_threshold or abs(theta) > self.theta_threshold
        return 1.0, bool(terminated)


def wrap_angle(x: float) -> float:
    """Map an angle into (-pi, pi]."""
    y = math.fmod(x + math.pi, 2.0 * math.pi)
    if y <= 0.0:
        y += 2.0 * math.pi
    return y - math.pi


def rk4_step(derivs: Callable[[np.ndarray], np.ndarray], y: np.ndarray, dt: float) -> np.ndarray:
    k1 = derivs(y)
    k2 = derivs(y + 0.5 * dt * k1)
    k3 = derivs(y + 0.5 * dt * k2)
    k4 = derivs(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class Acrobot(Environment):
    """Two-link underactuated arm.

    Version 1 applies torque in {-1, 0, +1} to the second joint (3 actions,
    500 steps). Version 0 is the older 4-action variant: +/- unit torque on
    either joint, 200 steps.
    """

    dt = 0.2
    link_length_1 = 1.0
    link_mass_1 = 1.0
    link_mass_2 = 1.0
    link_com_pos_1 = 0.5
    link_com_pos_2 = 0.5
    link_moi = 1.0
    g = 9.8
    max_vel_1 = 4 * math.pi
    max_vel_2 = 9 * math.pi

    # (torque on joint 1, torque on joint 2) per action index
    TORQUES = {
        0: ((1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)),
        1: ((0.0, -1.0), (0.0, 0.0), (0.0, 1.0)),
    }

    def __init__(self, version: int = 0):
        super().__init__()
        self.torques = self.TORQUES[version]
        self.spec = EnvSpec(
            name=f"acrobot_v{version}",
            observation_dim=4,
            low=(-math.pi, -math.pi, -self.max_vel_1, -self.max_vel_2),
            high=(math.pi, math.pi, self.max_vel_1, self.max_vel_2),
            action_count=len(self.torques),
            max_steps=200 if version == 0 else 500,
            solve_threshold=-100.0,
        )

    def _initial_state(self) -> np.ndarray:
        return self.rng.uniform(-0.1, 0.1, size=4)

    def _derivs(self, s: np.ndarray, tau1: float, tau2: float) -> np.ndarray:
        m1, m2 = self.link_mass_1, self.link_mass_2
        l1 = self.link_length_1
        lc1, lc2 = self.link_com_pos_1, self.link_com_pos_2
        i1 = i2 = self.link_moi
        g = self.g
        theta1, theta2, dtheta1, dtheta2 = s
        d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * math.cos(theta2)) + i1 + i2
        d2 = m2 * (lc2**2 + l1 * lc2 * math.cos(theta2)) + i2
        phi2 = m2 * lc2 * g * math.cos(theta1 + theta2 - math.pi / 2.0)
        phi1 = (
            -m2 * l1 * lc2 * dtheta2**2 * math.sin(theta2)
            - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * math.sin(theta2)
            + (m1 * lc1 + m2 * l1) * g * math.cos(theta1 - math.pi / 2)
            + phi2
        )
        ddtheta2 = (tau2 - d2 / d1 * (tau1 - phi1) - m2 * l1 * lc2 * dtheta1**2 * math.sin(theta2) - phi2) / (
            m2 * lc2**2 + i2 - d2**2 / d1
        )
        ddtheta1 = (tau1 - d2 * ddtheta2 - phi1) / d1
        return np.array([dtheta1, dtheta2, ddtheta1, ddtheta2])

    def _advance(self, action: int) -> tuple[float, bool]:
        tau1, tau2 = self.torques[action]
        ns = rk4_step(lambda y: self._derivs(y, tau1, tau2), self.state, self.dt)
        ns[0] = wrap_angle(ns[0])
        ns[1] = wrap_angle(ns[1])
        ns[2] = min(max(ns[2], -self.max_vel_1), self.max_vel_1)
        ns[3] = min(max(ns[3], -self.max_vel_2), self.max_vel_2)
        self.state = ns
        theta1, theta2 = ns[0], ns[1]
        terminated = -math.cos(theta1) - math.cos(theta2 + theta1) > 1.0
        return -1.0, bool(terminated)


_FACTORIES: dict[str, Callable[..., Environment]] = {
    "mountain_car_v0": MountainCar,
    "cartpole_v0": lambda **kw: CartPole(0, **kw),
    "cartpole_v1": lambda **kw: CartPole(1, **kw),
    "acrobot_v0": lambda **kw: Acrobot(0, **kw),
    "acrobot_v1": lambda **kw: Acrobot(1, **kw),
}
ENV_NAMES = tuple(_FACTORIES)


def make(name: str, **kwargs) -> Environment:
    """Build an environment by name (see ``ENV_NAMES``)."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {', '.join(ENV_NAMES)}") from None
    return factory(**kwargs)


def spec_for(name: str, **kwargs) -> EnvSpec:
    return make(name, **kwargs).spec


def solved(returns: Sequence[float], threshold: float, window: int = SOLVE_WINDOW) -> int | None:
    """First index whose ``window``-episode mean return reaches ``threshold``."""
    r = np.asarray(returns, dtype=float)
    if r.size < window:
        return None
    csum = np.concatenate([[0.0], np.cumsum(r)])
    sums = csum[window:] - csum[:-window]
    hits = np.flatnonzero(sums >= threshold * window)
    return int(hits[0]) if hits.size else None
