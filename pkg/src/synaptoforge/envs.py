"""Classic-control environments: cart-pole, mountain car and acrobot.

Dynamics follow the reference classic-control equations (Euler cart-pole,
closed-form mountain car, RK4 acrobot with the "book" equations). Physics is
evaluated in plain Python floats so trajectories are bit-reproducible; the
only randomness is the initial state, drawn from a PCG64 generator seeded by
:meth:`Env.reset`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ENV_IDS = ("cartpole", "mountaincar", "acrobot")


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated


@dataclass(frozen=True)
class SolvedThreshold:
    """Mean episode reward needed for an agent to count as solving a task."""

    value: float
    inclusive: bool

    def solved(self, score: float) -> bool:
        return score >= self.value if self.inclusive else score > self.value


SOLVED_THRESHOLDS = {
    "cartpole": SolvedThreshold(195.0, inclusive=True),
    "mountaincar": SolvedThreshold(-200.0, inclusive=False),
    "acrobot": SolvedThreshold(-500.0, inclusive=False),
}

REWARD_BOUNDS = {
    "cartpole": (1.0, 500.0),
    "mountaincar": (-200.0, -1.0),
    "acrobot": (-500.0, 0.0),
}


class Env:
    """Base class; subclasses define ``state`` handling and ``_advance``."""

    env_id = ""
    obs_dim = 0
    n_actions = 0
    max_steps = 0

    def __init__(self, seed=None):
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self.state = None
        self.steps = 0

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.Generator(np.random.PCG64(seed))
        self.state = self._initial_state()
        self.steps = 0
        return self.observation()

    def step(self, action) -> StepResult:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        if isinstance(action, (bool, np.bool_)) or int(action) != action or not 0 <= action < self.n_actions:
            raise ValueError(f"invalid action {action!r} for {self.env_id}")
        reward, terminated = self._advance(int(action))
        self.steps += 1
        truncated = not terminated and self.steps >= self.max_steps
        return StepResult(self.observation(), reward, terminated, truncated)

    def _initial_state(self):
        raise NotImplementedError

    def _advance(self, action):
        raise NotImplementedError

    def observation(self) -> np.ndarray:
        return np.array(self.state, dtype=np.float64)


class CartPole(Env):
    env_id = "cartpole"
    obs_dim = 4
    n_actions = 2
    max_steps = 500

    gravity = 9.8
    masscart = 1.0
    masspole = 0.1
    total_mass = masspole + masscart
    length = 0.5  # half the pole length
    polemass_length = masspole * length
    force_mag = 10.0
    tau = 0.02
    theta_threshold = 12 * 2 * math.pi / 360
    x_threshold = 2.4

    def _initial_state(self):
        return tuple(float(v) for v in self._rng.uniform(-0.05, 0.05, size=4))

    def _advance(self, action):
        x, x_dot, theta, theta_dot = self.state
        force = self.force_mag if action == 1 else -self.force_mag
        costheta = math.cos(theta)
        sintheta = math.sin(theta)
        temp = (force + self.polemass_length * theta_dot * theta_dot * sintheta) / self.total_mass
        thetaacc = (self.gravity * sintheta - costheta * temp) / (
            self.length * (4.0 / 3.0 - self.masspole * costheta * costheta / self.total_mass)
        )
        xacc = temp - self.polemass_length * thetaacc * costheta / self.total_mass
        x = x + self.tau * x_dot
        x_dot = x_dot + self.tau * xacc
        theta = theta + self.tau * theta_dot
        theta_dot = theta_dot + self.tau * thetaacc
        self.state = (x, x_dot, theta, theta_dot)
        terminated = (
            x < -self.x_threshold
            or x > self.x_threshold
            or theta < -self.theta_threshold
            or theta > self.theta_threshold
        )
        return 1.0, terminated


class MountainCar(Env):
    env_id = "mountaincar"
    obs_dim = 2
    n_actions = 3
    max_steps = 200

    min_position = -1.2
    max_position = 0.6
    max_speed = 0.07
    goal_position = 0.5
    goal_velocity = 0.0
    force = 0.001
    gravity = 0.0025

    def _initial_state(self):
        return (float(self._rng.uniform(-0.6, -0.4)), 0.0)

    def _advance(self, action):
        position, velocity = self.state
        velocity += (action - 1) * self.force + math.cos(3 * position) * (-self.gravity)
        velocity = min(max(velocity, -self.max_speed), self.max_speed)
        position += velocity
        position = min(max(position, self.min_position), self.max_position)
        if position == self.min_position and velocity < 0:
            velocity = 0.0
        self.state = (position, velocity)
        terminated = position >= self.goal_position and velocity >= self.goal_velocity
        return -1.0, terminated


def _wrap(x, lo, hi):
    diff = hi - lo
    while x > hi:
        x -= diff
    while x < lo:
        x += diff
    return x


class Acrobot(Env):
    """Two-link underactuated pendulum.

    The step reward is -1, except 0 on the step that reaches the goal height.
    """

    env_id = "acrobot"
    obs_dim = 6
    n_actions = 3
    max_steps = 500

    dt = 0.2
    link_length_1 = 1.0
    link_mass_1 = 1.0
    link_mass_2 = 1.0
    link_com_pos_1 = 0.5
    link_com_pos_2 = 0.5
    link_moi = 1.0
    max_vel_1 = 4 * math.pi
    max_vel_2 = 9 * math.pi
    torques = (-1.0, 0.0, 1.0)

    def _initial_state(self):
        return tuple(float(v) for v in self._rng.uniform(-0.1, 0.1, size=4))

    def observation(self):
        t1, t2, d1, d2 = self.state
        return np.array([math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2), d1, d2])

    def _dsdt(self, s, torque):
        m1, m2 = self.link_mass_1, self.link_mass_2
        l1 = self.link_length_1
        lc1, lc2 = self.link_com_pos_1, self.link_com_pos_2
        I1 = I2 = self.link_moi
        g = 9.8
        theta1, theta2, dtheta1, dtheta2 = s
        d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * math.cos(theta2)) + I1 + I2
        d2 = m2 * (lc2**2 + l1 * lc2 * math.cos(theta2)) + I2
        phi2 = m2 * lc2 * g * math.cos(theta1 + theta2 - math.pi / 2.0)
        phi1 = (
            -m2 * l1 * lc2 * dtheta2**2 * math.sin(theta2)
            - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * math.sin(theta2)
            + (m1 * lc1 + m2 * l1) * g * math.cos(theta1 - math.pi / 2)
            + phi2
        )
        ddtheta2 = (
            torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1**2 * math.sin(theta2) - phi2
        ) / (m2 * lc2**2 + I2 - d2**2 / d1)
        ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
        return (dtheta1, dtheta2, ddtheta1, ddtheta2)

    def _rk4(self, s, torque):
        h = self.dt
        k1 = self._dsdt(s, torque)
        k2 = self._dsdt(tuple(a + h / 2 * b for a, b in zip(s, k1)), torque)
        k3 = self._dsdt(tuple(a + h / 2 * b for a, b in zip(s, k2)), torque)
        k4 = self._dsdt(tuple(a + h * b for a, b in zip(s, k3)), torque)
        return tuple(
            a + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
            for a, b1, b2, b3, b4 in zip(s, k1, k2, k3, k4)
        )

    def _advance(self, action):
        t1, t2, d1, d2 = self._rk4(self.state, self.torques[action])
        self.state = (
            _wrap(t1, -math.pi, math.pi),
            _wrap(t2, -math.pi, math.pi),
            min(max(d1, -self.max_vel_1), self.max_vel_1),
            min(max(d2, -self.max_vel_2), self.max_vel_2),
        )
        terminated = -math.cos(self.state[0]) - math.cos(self.state[1] + self.state[0]) > 1.0
        return (0.0 if terminated else -1.0), terminated


_ENVS = {cls.env_id: cls for cls in (CartPole, MountainCar, Acrobot)}


def make_env(env_id: str, seed=None) -> Env:
    try:
        return _ENVS[env_id](seed)
    except KeyError:
        raise ValueError(f"unknown environment {env_id!r}; expected one of {ENV_IDS}") from None


def env_spec(env_id: str):
    """``(obs_dim, n_actions)`` for an environment id."""
    cls = make_env(env_id).__class__
    return cls.obs_dim, cls.n_actions


def run_episode(network, env, seed=None, return_length=False):
    """Greedy rollout of ``network`` until termination or truncation.

    ``env`` is an :class:`Env` or an environment id. Returns the undiscounted
    reward sum, and the episode length when ``return_length`` is set.
    """
    if isinstance(env, str):
        env = make_env(env)
    if network.obs_dim != env.obs_dim or network.n_actions != env.n_actions:
        raise ValueError(
            f"network {network.layer_sizes} does not fit {env.env_id} "
            f"({env.obs_dim} inputs, {env.n_actions} actions)"
        )
    obs = env.reset(seed)
    total = 0.0
    steps = 0
    while True:
        result = env.step(network.act(obs))
        total += result.reward
        steps += 1
        obs = result.observation
        if result.done:
            break
    return (total, steps) if return_length else total
