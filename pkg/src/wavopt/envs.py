"""Benchmark environments: constrained cartpole, acrobot, tabular CMDPs.

Both physics tasks expose a pure single-step function (state in, state
out, no hidden mutable state) plus a thin episode wrapper that adds the
step cap, seeded resets, and the continuous-to-discrete action mapping
used by the deterministic actor (sign / thresholds on a scalar in
[-1, 1]).

Cartpole (classic constants: 1.0 kg cart, 0.1 kg pole, 0.5 m half
length, +-10 N force, dt = 0.02 s, semi-implicit Euler):

* reward +1 per surviving step;
* utility g1 = 1 when the cart position lies in one of five closed
  penalty zones [-2.4,-2.2], [-1.3,-1.1], [-0.1,0.1], [1.1,1.3],
  [2.2,2.4];
* utility g2 = 1 when |pole angle| exceeds 6 degrees;
* termination when |pole angle| exceeds 12 degrees or at the step cap
  (250); the cart position is clamped to [-2.4, 2.4] and wall contact
  does not terminate.

Acrobot (two unit-mass, unit-length links, RK4 integration):

* reward 1 when the tip height -cos(th1) - cos(th1 + th2) exceeds 0.5;
* utility g1 = 1 when torque is applied while link-1 angular velocity is
  negative (anticlockwise);
* utility g2 = 1 when link 2 rotates anticlockwise relative to link 1
  (negative relative angular velocity); both indicators read the
  pre-step velocities (the conditions hold "while" the torque acts);
* episodes run to the step cap (500).

The unactuated acrobot conserves total mechanical energy; the RK4 drift
over a full episode is checked in the test suite against a 1% budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cmdp import TabularCmdp, exact_objective, uniform_policy

__all__ = [
    "CARTPOLE_ZONES",
    "cartpole_step",
    "cartpole_zone_penalty",
    "cartpole_angle_penalty",
    "acrobot_step",
    "acrobot_energy",
    "acrobot_tip_height",
    "CartpoleEnv",
    "AcrobotEnv",
    "TabularEnv",
    "ReturnTracker",
    "episode_return",
    "random_tabular_cmdp",
    "make_env",
]

RETURN_START = -250.0

# -- cartpole ---------------------------------------------------------------

GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
TOTAL_MASS = CART_MASS + POLE_MASS
POLE_HALF_LENGTH = 0.5
POLE_MASS_LENGTH = POLE_MASS * POLE_HALF_LENGTH
FORCE_MAG = 10.0
X_LIMIT = 2.4
ANGLE_SOFT_LIMIT = 6.0 * math.pi / 180.0
ANGLE_HARD_LIMIT = 12.0 * math.pi / 180.0

CARTPOLE_ZONES = (
    (-2.4, -2.2),
    (-1.3, -1.1),
    (-0.1, 0.1),
    (1.1, 1.3),
    (2.2, 2.4),
)


def cartpole_zone_penalty(x: float) -> int:
    """1 when the cart position lies in a closed penalty zone."""
    for lo, hi in CARTPOLE_ZONES:
        if lo <= x <= hi:
            return 1
    return 0


def cartpole_angle_penalty(theta: float) -> int:
    """1 when the pole leans more than 6 degrees from vertical."""
    return 1 if abs(theta) > ANGLE_SOFT_LIMIT else 0


def cartpole_step(state: np.ndarray, action: int, dt: float = 0.02):
    """One semi-implicit Euler step of the cart-pole.

    ``state`` is (x, x_dot, theta, theta_dot); ``action`` is 0 (push
    left) or 1 (push right).  Returns ``(next_state, reward, g, done)``
    where ``g = (zone penalty, angle penalty)`` evaluated on the new
    state and ``done`` reflects the 12-degree failure condition only
    (the episode wrapper adds the step cap).
    """
    if action not in (0, 1):
        raise ValueError("cartpole action must be 0 or 1")
    x, x_dot, theta, theta_dot = (float(v) for v in state)
    force = FORCE_MAG if action == 1 else -FORCE_MAG
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    temp = (force + POLE_MASS_LENGTH * theta_dot**2 * sin_t) / TOTAL_MASS
    theta_acc = (GRAVITY * sin_t - cos_t * temp) / (
        POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos_t**2 / TOTAL_MASS)
    )
    x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos_t / TOTAL_MASS

    # semi-implicit: velocities first, positions with the new velocities
    x_dot += dt * x_acc
    theta_dot += dt * theta_acc
    x += dt * x_dot
    theta += dt * theta_dot
    x = min(max(x, -X_LIMIT), X_LIMIT)

    nxt = np.array([x, x_dot, theta, theta_dot])
    g = (cartpole_zone_penalty(x), cartpole_angle_penalty(theta))
    done = abs(theta) > ANGLE_HARD_LIMIT
    return nxt, 1.0, g, done


# -- acrobot ------------------------------------------------------------------

LINK_MASS = 1.0
LINK_LENGTH = 1.0
LINK_COM = 0.5
LINK_INERTIA = 1.0
ACROBOT_TORQUES = (-1.0, 0.0, 1.0)
ACROBOT_HEIGHT_GOAL = 0.5


def _acrobot_derivs(s: np.ndarray, torque: float) -> np.ndarray:
    th1, th2, dth1, dth2 = s
    m, l1, lc, inert, grav = LINK_MASS, LINK_LENGTH, LINK_COM, LINK_INERTIA, GRAVITY
    d1 = m * lc**2 + m * (l1**2 + lc**2 + 2 * l1 * lc * math.cos(th2)) + 2 * inert
    d2 = m * (lc**2 + l1 * lc * math.cos(th2)) + inert
    phi2 = m * lc * grav * math.cos(th1 + th2 - math.pi / 2)
    phi1 = (
        -m * l1 * lc * dth2**2 * math.sin(th2)
        - 2 * m * l1 * lc * dth2 * dth1 * math.sin(th2)
        + (m * lc + m * l1) * grav * math.cos(th1 - math.pi / 2)
        + phi2
    )
    ddth2 = (torque + d2 / d1 * phi1 - m * l1 * lc * dth1**2 * math.sin(th2) - phi2) / (
        m * lc**2 + inert - d2**2 / d1
    )
    ddth1 = -(d2 * ddth2 + phi1) / d1
    return np.array([dth1, dth2, ddth1, ddth2])


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def acrobot_tip_height(state: np.ndarray) -> float:
    th1, th2 = float(state[0]), float(state[1])
    return -math.cos(th1) - math.cos(th1 + th2)


def acrobot_energy(state: np.ndarray) -> float:
    """Total mechanical energy; constant along unactuated trajectories."""
    th1, th2, dth1, dth2 = (float(v) for v in state)
    m, l1, lc, inert, grav = LINK_MASS, LINK_LENGTH, LINK_COM, LINK_INERTIA, GRAVITY
    d1 = m * lc**2 + m * (l1**2 + lc**2 + 2 * l1 * lc * math.cos(th2)) + 2 * inert
    d2 = m * (lc**2 + l1 * lc * math.cos(th2)) + inert
    m22 = m * lc**2 + inert
    kinetic = 0.5 * d1 * dth1**2 + d2 * dth1 * dth2 + 0.5 * m22 * dth2**2
    potential = -(m * lc + m * l1) * grav * math.cos(th1) - m * lc * grav * math.cos(th1 + th2)
    return kinetic + potential


def acrobot_step(state: np.ndarray, action: int, dt: float = 0.02):
    """One RK4 step of the acrobot.

    ``state`` is (th1, th2, dth1, dth2) with angles measured from the
    hanging position; ``action`` indexes the torque set (-1, 0, +1) on
    the second joint.  Constraint indicators read the pre-step
    velocities.  Returns ``(next_state, reward, g, done=False)``.
    """
    if action not in (0, 1, 2):
        raise ValueError("acrobot action must be 0, 1, or 2")
    torque = ACROBOT_TORQUES[action]
    s = np.asarray(state, dtype=float)

    g1 = 1 if (torque != 0.0 and s[2] < 0.0) else 0
    g2 = 1 if s[3] < 0.0 else 0

    k1 = _acrobot_derivs(s, torque)
    k2 = _acrobot_derivs(s + 0.5 * dt * k1, torque)
    k3 = _acrobot_derivs(s + 0.5 * dt * k2, torque)
    k4 = _acrobot_derivs(s + dt * k3, torque)
    nxt = s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    nxt[0] = _wrap_angle(nxt[0])
    nxt[1] = _wrap_angle(nxt[1])

    reward = 1.0 if acrobot_tip_height(nxt) > ACROBOT_HEIGHT_GOAL else 0.0
    return nxt, reward, (g1, g2), False


# -- episode wrappers ---------------------------------------------------------


class _EpisodeEnv:
    """Shared step-cap and seeding logic for the physics tasks."""

    state_dim = 4
    n_constraints = 2

    def __init__(self, dt: float, max_steps: int, seed=0):
        self.dt = dt
        self.max_steps = max_steps
        self._rng = np.random.default_rng(seed)
        self._state = None
        self._steps = 0

    def seed(self, seed) -> None:
        self._rng = np.random.default_rng(seed)

    def reset(self, rng=None) -> np.ndarray:
        if rng is None:
            rng = self._rng
        elif not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        self._state = self._initial_state(rng)
        self._steps = 0
        return self._state.copy()

    @property
    def state(self) -> np.ndarray:
        return self._state.copy()

    def step(self, action: float):
        if self._state is None:
            raise RuntimeError("call reset() before step()")
        discrete = self.discretize(action)
        nxt, r, g, failed = self._pure_step(self._state, discrete)
        self._state = nxt
        self._steps += 1
        done = bool(failed or self._steps >= self.max_steps)
        return nxt.copy(), r, np.asarray(g, dtype=float), done


class CartpoleEnv(_EpisodeEnv):
    """Constrained cartpole; continuous scalar actions map to force sign."""

    name = "cartpole"
    # fixed input normalization for the networks (position, velocity,
    # angle, angular velocity ranges)
    feature_scale = np.array([1.0 / 2.4, 1.0 / 3.0, 1.0 / ANGLE_HARD_LIMIT, 1.0 / 3.0])

    def __init__(self, dt: float = 0.02, max_steps: int = 250, seed=0):
        super().__init__(dt, max_steps, seed)

    def _initial_state(self, rng) -> np.ndarray:
        return rng.uniform(-0.05, 0.05, size=4)

    def discretize(self, action: float) -> int:
        return 1 if float(action) >= 0.0 else 0

    def _pure_step(self, state, discrete):
        return cartpole_step(state, discrete, self.dt)


class AcrobotEnv(_EpisodeEnv):
    """Constrained acrobot; continuous scalar actions map to torque thirds."""

    name = "acrobot"
    feature_scale = np.array([1.0 / math.pi, 1.0 / math.pi, 1.0 / (4 * math.pi), 1.0 / (9 * math.pi)])

    def __init__(self, dt: float = 0.02, max_steps: int = 500, seed=0):
        super().__init__(dt, max_steps, seed)

    def _initial_state(self, rng) -> np.ndarray:
        return rng.uniform(-0.1, 0.1, size=4)

    def discretize(self, action: float) -> int:
        a = float(action)
        if a < -1.0 / 3.0:
            return 0
        if a > 1.0 / 3.0:
            return 2
        return 1

    def _pure_step(self, state, discrete):
        return acrobot_step(state, discrete, self.dt)


class TabularEnv:
    """Sampled episodes from a tabular CMDP, horizon-truncated for discounting."""

    def __init__(self, cmdp: TabularCmdp, horizon: int = None, seed=0):
        self.cmdp = cmdp
        if horizon is None:
            # truncate once the discounted tail is below 1e-10
            horizon = max(1, int(math.ceil(math.log(1e-10) / math.log(max(cmdp.gamma, 1e-12)))))
        self.max_steps = horizon
        self.n_constraints = cmdp.n_utilities
        self.state_dim = 1
        self._rng = np.random.default_rng(seed)
        self._state = None
        self._steps = 0

    def seed(self, seed) -> None:
        self._rng = np.random.default_rng(seed)

    def reset(self, rng=None) -> int:
        if rng is None:
            rng = self._rng
        elif not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        self._this_rng = rng
        self._state = int(rng.choice(self.cmdp.n_states, p=self.cmdp.initial_dist))
        self._steps = 0
        return self._state

    def step(self, action: int):
        s, a = self._state, int(action)
        r = float(self.cmdp.rewards[s, a])
        g = self.cmdp.utilities[:, s, a].copy()
        nxt = int(self._this_rng.choice(self.cmdp.n_states, p=self.cmdp.transitions[s, a]))
        self._state = nxt
        self._steps += 1
        return nxt, r, g, self._steps >= self.max_steps


# -- returns and generators ----------------------------------------------------


@dataclass
class ReturnTracker:
    """Cumulative episode return starting from the -250 convention."""

    value: float = RETURN_START

    def update(self, reward: float) -> float:
        self.value += float(reward)
        return self.value


def episode_return(rewards, start: float = RETURN_START) -> float:
    return float(start + np.sum(np.asarray(rewards, dtype=float)))


def random_tabular_cmdp(n_states: int, n_actions: int, n_constraints: int, seed, gamma: float = 0.9) -> TabularCmdp:
    """Random CMDP with normalized-uniform rows and feasible bounds.

    Bounds are set so a uniformly random policy satisfies every
    constraint with margin: b_i = 1.1 * J_g^i(uniform) + 0.01.
    """
    rng = np.random.default_rng(seed)
    trans = rng.uniform(0.0, 1.0, size=(n_states, n_actions, n_states)) + 1e-3
    trans /= trans.sum(axis=2, keepdims=True)
    rewards = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    utils = rng.integers(0, 2, size=(n_constraints, n_states, n_actions)).astype(float)
    cmdp = TabularCmdp(
        trans, rewards, utils, np.zeros(n_constraints), gamma,
        initial_dist=np.full(n_states, 1.0 / n_states),
    )
    uni = uniform_policy(cmdp)
    bounds = np.array(
        [1.1 * exact_objective(cmdp, uni, signal=i + 1) + 0.01 for i in range(n_constraints)]
    )
    cmdp.bounds = bounds
    return cmdp


def make_env(name: str, dt: float = 0.02, seed=0):
    if name == "cartpole":
        return CartpoleEnv(dt=dt, seed=seed)
    if name == "acrobot":
        return AcrobotEnv(dt=dt, seed=seed)
    raise ValueError(f"unknown environment {name!r}")
