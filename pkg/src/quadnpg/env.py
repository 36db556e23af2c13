"""Learning task built on the simulator: observation, cost, initial states, command composition."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from quadnpg import so3
from quadnpg.sim import PDGains, QuadParams, QuadState, pd_attitude, step_batch, threshold, torque_to_thrust

OBS_DIM = 18
ACT_DIM = 4


@dataclass(frozen=True)
class CostWeights:
    position: float = 4e-3
    action: float = 2e-4
    angular_velocity: float = 3e-4
    velocity: float = 5e-4
    gamma: float = 0.99

    def __post_init__(self):
        if min(self.position, self.action, self.angular_velocity, self.velocity) < 0:
            raise ValueError("cost weights must be non-negative")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")


@dataclass(frozen=True)
class ObsScales:
    position: float = 0.5
    velocity: float = 0.25
    angular_velocity: float = 0.15


@dataclass(frozen=True)
class InitDistribution:
    position: float = 1.0
    velocity: float = 1.0
    angular_velocity: float = 1.0

    def __post_init__(self):
        bounds = (self.position, self.velocity, self.angular_velocity)
        if not all(np.isfinite(b) and b >= 0 for b in bounds):
            raise ValueError("initial-state bounds must be finite and non-negative")


def observe(state, waypoint=None, scales=ObsScales()):
    """18-vector: rotation entries (row-major), then scaled relative position, velocity, body rate."""
    rel = state.p if waypoint is None else state.p - np.asarray(waypoint, dtype=np.float64)
    batch = np.shape(state.p)[:-1]
    return np.concatenate(
        [
            np.reshape(state.R, batch + (9,)),
            rel * scales.position,
            state.v * scales.velocity,
            state.w * scales.angular_velocity,
        ],
        axis=-1,
    )


def cost(state, action, weights=CostWeights()):
    """Per-step cost; ``action`` is the thrust deviation emitted by the policy (N)."""
    norm = lambda x: np.linalg.norm(x, axis=-1)  # noqa: E731
    return (
        weights.position * norm(state.p)
        + weights.action * norm(np.asarray(action, dtype=np.float64))
        + weights.angular_velocity * norm(state.w)
        + weights.velocity * norm(state.v)
    )


def sample_initial(dist, rng, size=None):
    """Uniform orientation over SO(3); position, velocity and body rate uniform in boxes."""
    shape = () if size is None else (size,)
    R = so3.random_rotation(rng, size)
    p = rng.uniform(-1.0, 1.0, shape + (3,)) * dist.position
    v = rng.uniform(-1.0, 1.0, shape + (3,)) * dist.velocity
    w = rng.uniform(-1.0, 1.0, shape + (3,)) * dist.angular_velocity
    return QuadState(p=p, R=R, v=v, w=w)


def act(policy_out, state, params=QuadParams(), gains=PDGains(), action_scale=1.0):
    """Thresholded rotor thrusts: hover bias + PD torque mapped to rotors + scaled policy output."""
    pd = torque_to_thrust(pd_attitude(state, gains), params)
    return threshold(params.hover_thrust + pd + np.asarray(policy_out) * action_scale)


@dataclass
class QuadTask:
    """Batched task interface used by the rollout engine.

    States are flat ``(n, 18)`` arrays (see :mod:`quadnpg.sim`). All training
    happens with the waypoint at the origin.
    """

    params: QuadParams = field(default_factory=QuadParams)
    gains: PDGains = field(default_factory=PDGains)
    weights: CostWeights = field(default_factory=CostWeights)
    scales: ObsScales = field(default_factory=ObsScales)
    init: InitDistribution = field(default_factory=InitDistribution)
    action_scale: float = 1.0

    obs_dim = OBS_DIM
    act_dim = ACT_DIM

    @property
    def gamma(self):
        return self.weights.gamma

    def initial_state(self, rng):
        return sample_initial(self.init, rng).to_array()

    def observe(self, x):
        return observe(QuadState.from_array(x), None, self.scales)

    def raw_thrusts(self, x, actions):
        s = QuadState.from_array(x)
        pd = torque_to_thrust(pd_attitude(s, self.gains), self.params)
        return self.params.hover_thrust + pd + actions * self.action_scale

    def transition(self, x, actions):
        """Apply ``actions`` in every lane; returns ``(x_next, costs, ok)``."""
        s = QuadState.from_array(x)
        with np.errstate(all="ignore"):
            raw = self.raw_thrusts(x, actions)
            T = np.maximum(np.nan_to_num(raw, nan=0.0), 0.0)
            c = cost(s, actions * self.action_scale, self.weights)
            nxt, ok = step_batch(s, T, self.params)
        return nxt.to_array(), c, ok & np.all(np.isfinite(raw), axis=-1)
