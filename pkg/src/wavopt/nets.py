"""Actor and critic containers built on the explicit-backprop MLP.

The actor maps a (feature-scaled) state to a raw output vector laid out
as ``[action (action_dim) | slice block]`` where the slice block holds
``slice_count`` groups of ``num_monomials(slice_degree, slice_dim) + 1``
values: raw slice coefficients followed by a scalar offset.  The action
head may be tanh-squashed to (-1, 1); slice outputs are always linear.

The critic maps ``[scaled state | action]`` to ``n_signals * n_quantiles``
outputs, reshaped to one block of quantile atoms per signal (signal 0 is
the reward, signal i >= 1 is utility i).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .measures import num_monomials

__all__ = ["ActorNet", "CriticNet", "PolicyNets", "init_policy_nets"]


@dataclass(eq=False)
class ActorNet:
    params: nn.MlpParams
    action_dim: int
    slice_count: int
    slice_dim: int
    slice_degree: int
    feature_scale: np.ndarray
    squash: bool = True

    @property
    def coeffs_per_slice(self) -> int:
        return num_monomials(self.slice_degree, self.slice_dim)

    @property
    def slice_width(self) -> int:
        return self.coeffs_per_slice + 1

    def scaled(self, states: np.ndarray) -> np.ndarray:
        return np.atleast_2d(states) * self.feature_scale

    def raw_forward(self, states: np.ndarray) -> np.ndarray:
        return nn.forward_batch(self.params, self.scaled(states))

    def act_batch(self, states: np.ndarray) -> np.ndarray:
        raw = self.raw_forward(states)[:, : self.action_dim]
        return np.tanh(raw) if self.squash else raw

    def act(self, state) -> np.ndarray:
        return self.act_batch(np.asarray(state, dtype=float)[None, :])[0]

    def slice_block(self, state) -> np.ndarray:
        """Raw (unnormalized) slice outputs for one state: (slice_count, width)."""
        raw = self.raw_forward(np.asarray(state, dtype=float)[None, :])[0]
        block = raw[self.action_dim :]
        return block.reshape(self.slice_count, self.slice_width)

    def copy(self) -> "ActorNet":
        return ActorNet(
            self.params.copy(),
            self.action_dim,
            self.slice_count,
            self.slice_dim,
            self.slice_degree,
            self.feature_scale,
            self.squash,
        )


@dataclass(eq=False)
class CriticNet:
    params: nn.MlpParams
    n_signals: int
    n_quantiles: int
    feature_scale: np.ndarray

    def inputs(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        s = np.atleast_2d(states) * self.feature_scale
        a = np.atleast_2d(actions)
        return np.concatenate([s, a], axis=1)

    def forward_batch(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """(B, n_signals, n_quantiles) atom blocks; not sorted."""
        out = nn.forward_batch(self.params, self.inputs(states, actions))
        return out.reshape(out.shape[0], self.n_signals, self.n_quantiles)

    def atoms(self, state, action, signal: int) -> np.ndarray:
        s = np.asarray(state, dtype=float)[None, :]
        a = np.atleast_1d(np.asarray(action, dtype=float))[None, :]
        return self.forward_batch(s, a)[0, signal]

    def copy(self) -> "CriticNet":
        return CriticNet(self.params.copy(), self.n_signals, self.n_quantiles, self.feature_scale)


@dataclass(eq=False)
class PolicyNets:
    """Actor/critic pair plus an optional frozen target critic."""

    actor: ActorNet
    critic: CriticNet
    target_critic: CriticNet = None
    target_actor: ActorNet = None

    def bootstrap_critic(self) -> CriticNet:
        return self.target_critic if self.target_critic is not None else self.critic

    def bootstrap_actor(self) -> ActorNet:
        return self.target_actor if self.target_actor is not None else self.actor

    def sync_target(self) -> None:
        if self.target_critic is not None:
            self.target_critic = self.critic.copy()
        if self.target_actor is not None:
            self.target_actor = self.actor.copy()


def init_policy_nets(
    state_dim: int,
    action_dim: int,
    hidden_width: int,
    hidden_layers: int,
    n_quantiles: int,
    n_signals: int,
    slice_count: int,
    slice_dim: int,
    slice_degree: int,
    rng,
    feature_scale=None,
    use_target: bool = False,
    squash: bool = True,
) -> PolicyNets:
    """Seeded construction of both networks; deterministic given the generator."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    scale = np.ones(state_dim) if feature_scale is None else np.asarray(feature_scale, dtype=float)
    if scale.shape != (state_dim,):
        raise ValueError("feature_scale must have one entry per state dimension")
    hidden = [hidden_width] * hidden_layers
    actor_out = action_dim + slice_count * (num_monomials(slice_degree, slice_dim) + 1)
    actor = ActorNet(
        params=nn.init_mlp([state_dim] + hidden + [actor_out], rng),
        action_dim=action_dim,
        slice_count=slice_count,
        slice_dim=slice_dim,
        slice_degree=slice_degree,
        feature_scale=scale,
        squash=squash,
    )
    critic = CriticNet(
        params=nn.init_mlp([state_dim + action_dim] + hidden + [n_signals * n_quantiles], rng),
        n_signals=n_signals,
        n_quantiles=n_quantiles,
        feature_scale=scale,
    )
    target = critic.copy() if use_target else None
    target_actor = actor.copy() if use_target else None
    return PolicyNets(actor=actor, critic=critic, target_critic=target, target_actor=target_actor)
