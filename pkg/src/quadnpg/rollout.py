"""Exploration rollouts: initial, junction and branch trajectories.

Every lane of a batch advances one step at a time so that the policy is
evaluated once per step on the stacked observations. A lane whose transition
fails (non-finite state or angular-velocity cap) is truncated at its last
valid state; its tail value then comes from the value network.

Junction pairs are formed at the first perturbed step of each junction. With
a noise depth above one, the remaining perturbed steps are part of the
perturbed continuation, so ``v_f_next`` is the discounted return of the rest
of the junction followed by the branch.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from quadnpg.mlp import batch_forward

log = logging.getLogger(__name__)

INITIAL, JUNCTION, BRANCH = "initial", "junction", "branch"


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.33
    depth: int = 2
    covariance: tuple | None = None  # optional full 4x4 matrix, overrides sigma

    def matrix(self, act_dim=4):
        if self.covariance is not None:
            S = np.asarray(self.covariance, dtype=np.float64)
        else:
            S = self.sigma**2 * np.eye(act_dim)
        if S.shape != (act_dim, act_dim) or not np.allclose(S, S.T):
            raise ValueError("noise covariance must be a symmetric square matrix")
        if np.linalg.eigvalsh(S).min() <= 0:
            raise ValueError("noise covariance must be full rank (positive definite)")
        return S


@dataclass(frozen=True)
class RolloutConfig:
    n_initial: int = 512
    n_branch: int = 1024
    t_initial: int = 600
    t_branch: int = 600
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def expected_steps(self):
        return self.n_initial * self.t_initial + self.n_branch * (self.noise.depth + self.t_branch)


@dataclass
class Trajectory:
    states: np.ndarray  # (T+1, state_dim)
    observations: np.ndarray  # (T+1, obs_dim)
    actions: np.ndarray  # (T, act_dim), actions actually applied
    costs: np.ndarray  # (T,)
    kind: str = INITIAL
    parent: tuple | None = None  # (trajectory id, step index)

    def __len__(self):
        return len(self.costs)


@dataclass
class JunctionPair:
    """Array fields carry a leading pair dimension."""

    obs: np.ndarray
    a_p: np.ndarray
    a_f: np.ndarray
    r_f: np.ndarray
    v_f_next: np.ndarray
    v_p: np.ndarray
    horizon: np.ndarray  # steps over which both continuations were summed

    _keys = ("obs", "a_p", "a_f", "r_f", "v_f_next", "v_p", "horizon")

    def __len__(self):
        return len(self.r_f)

    def __getitem__(self, idx):
        return JunctionPair(*(getattr(self, k)[idx] for k in self._keys))

    @classmethod
    def concat(cls, pairs):
        return cls(*(np.concatenate([getattr(p, k) for p in pairs]) for k in cls._keys))


@dataclass
class LaneBatch:
    states: np.ndarray  # (n, T+1, state_dim)
    obs: np.ndarray  # (n, T+1, obs_dim)
    policy_actions: np.ndarray  # (n, T, act_dim), noise-free policy outputs
    actions: np.ndarray  # (n, T, act_dim), applied actions
    costs: np.ndarray  # (n, T)
    lengths: np.ndarray  # (n,) valid transitions per lane

    def trajectory(self, i, start=0, stop=None, kind=INITIAL, parent=None):
        stop = self.lengths[i] if stop is None else min(stop, self.lengths[i])
        start = min(start, stop)
        return Trajectory(
            self.states[i, start : stop + 1],
            self.obs[i, start : stop + 1],
            self.actions[i, start:stop],
            self.costs[i, start:stop],
            kind,
            parent,
        )


@dataclass
class IterationSamples:
    obs: np.ndarray  # on-policy observations
    targets: np.ndarray  # their Monte-Carlo value targets
    pairs: JunctionPair
    trajectories: list
    stats: dict


def simulate(policy, task, x0, horizon, noise=None):
    """Roll ``len(x0)`` lanes for ``horizon`` steps; ``noise[:, t]`` is added at step ``t``."""
    n = len(x0)
    sd, od, ad = x0.shape[1], task.obs_dim, task.act_dim
    states = np.empty((n, horizon + 1, sd))
    obs = np.empty((n, horizon + 1, od))
    pol = np.zeros((n, horizon, ad))
    acts = np.zeros((n, horizon, ad))
    costs = np.zeros((n, horizon))
    lengths = np.full(n, horizon)
    alive = np.ones(n, dtype=bool)

    x = np.array(x0, dtype=np.float64)
    states[:, 0] = x
    obs[:, 0] = task.observe(x)
    for t in range(horizon):
        a = batch_forward(policy, obs[:, t])
        pol[:, t] = a
        if noise is not None and t < noise.shape[1]:
            a = a + noise[:, t]
        x_next, c, ok = task.transition(x, a)
        died = alive & ~ok
        if np.any(died):
            lengths[died] = t
            alive &= ok
        x = np.where(alive[:, None], x_next, x)
        acts[:, t] = a
        costs[:, t] = np.where(alive, c, 0.0)
        states[:, t + 1] = x
        obs[:, t + 1] = task.observe(x)
    return LaneBatch(states, obs, pol, acts, costs, lengths)


def discounted_values(costs, lengths, terminal, gamma):
    """Backward recursion ``v_i = r_i + gamma v_{i+1}`` seeded with the terminal value.

    ``costs`` has shape ``(n, T)``; lane ``j`` uses its first ``lengths[j]``
    costs and ``terminal[j]`` as the value of state ``lengths[j]``. Returns
    ``(n, T+1)``; entries past a lane's length hold the terminal value.
    """
    n, T = costs.shape
    v = np.empty((n, T + 1))
    v_next = np.asarray(terminal, dtype=np.float64).copy()
    v[:, T] = v_next
    for t in range(T - 1, -1, -1):
        v_next = np.where(t < lengths, costs[:, t] + gamma * v_next, v_next)
        v[:, t] = v_next
    return v


def mc_values(traj, value, gamma):
    """Monte-Carlo value targets for every state of ``traj`` (last entry is the terminal value)."""
    terminal = batch_forward(value, traj.observations[-1:])[:, 0]
    T = len(traj.costs)
    return discounted_values(traj.costs[None, :], np.array([T]), terminal, gamma)[0]


def _lane_values(lanes, value, gamma):
    idx = np.arange(len(lanes.lengths))
    terminal = batch_forward(value, lanes.obs[idx, lanes.lengths])[:, 0]
    return discounted_values(lanes.costs, lanes.lengths, terminal, gamma)


def _paired_values(init, br, traj_idx, step_idx, H, value, gamma):
    """On-policy value at each junction site and perturbed value after its first step, both over ``H`` steps."""
    K = len(H)
    if K == 0:
        return np.zeros(0), np.zeros(0)
    h_max = max(int(H.max()), 1)
    cols = np.minimum(step_idx[:, None] + np.arange(h_max)[None, :], init.costs.shape[1] - 1)
    c_init = init.costs[traj_idx[:, None], cols]
    end_obs = np.concatenate([init.obs[traj_idx, step_idx + H], br.obs[np.arange(K), H]])
    terminal = batch_forward(value, end_obs)[:, 0]
    v_p = discounted_values(c_init, H, terminal[:K], gamma)[:, 0]
    v_f = discounted_values(br.costs[:, :h_max], H, terminal[K:], gamma)
    return v_p, v_f[:, 1]


def _rng(seed, iteration, stream, index=None):
    key = [int(seed), int(iteration), stream] + ([] if index is None else [int(index)])
    return np.random.default_rng(np.random.SeedSequence(key))


def initial_states(task, n, seed, iteration, stream=0):
    return np.stack([task.initial_state(_rng(seed, iteration, stream, i)) for i in range(n)]) if n else np.empty((0, 18))


def run_iteration(policy, value, task, cfg, seed=0, iteration=0):
    """Collect one iteration of samples; returns :class:`IterationSamples`."""
    gamma = task.gamma
    depth = cfg.noise.depth
    if depth < 1:
        raise ValueError("noise depth must be at least 1")
    L = np.linalg.cholesky(cfg.noise.matrix(task.act_dim))

    x0 = initial_states(task, cfg.n_initial, seed, iteration)
    init = simulate(policy, task, x0, cfg.t_initial)
    v_init = _lane_values(init, value, gamma)

    trajectories = [init.trajectory(i) for i in range(cfg.n_initial)]
    obs_parts = [init.obs[i, : init.lengths[i]] for i in range(cfg.n_initial)]
    tgt_parts = [v_init[i, : init.lengths[i]] for i in range(cfg.n_initial)]

    # junction sites uniform over all valid (trajectory, step) positions
    total = int(init.lengths.sum())
    n_branch = cfg.n_branch if total > 0 else 0
    flat = _rng(seed, iteration, 2).integers(total, size=n_branch) if n_branch else np.zeros(0, int)
    bounds = np.cumsum(init.lengths)
    traj_idx = np.searchsorted(bounds, flat, side="right")
    step_idx = flat - np.concatenate([[0], bounds])[traj_idx]

    noise = np.zeros((n_branch, depth, task.act_dim))
    for j in range(n_branch):
        rng = _rng(seed, iteration, 1, j)
        noise[j] = rng.standard_normal((depth, task.act_dim)) @ L.T
        while np.any(np.all(noise[j] == 0.0, axis=-1)):  # measure-zero tie
            noise[j] = rng.standard_normal((depth, task.act_dim)) @ L.T

    br = simulate(policy, task, init.states[traj_idx, step_idx], depth + cfg.t_branch, noise)
    v_br = _lane_values(br, value, gamma)

    # Both continuations are compared over the same horizon H so that a
    # vanishing perturbation gives a vanishing advantage.
    H = np.minimum(init.lengths[traj_idx] - step_idx, br.lengths)
    keep = H >= 1
    v_p, v_f_next = _paired_values(init, br, traj_idx, step_idx, H, value, gamma)

    for j in range(n_branch):
        parent = (int(traj_idx[j]), int(step_idx[j]))
        jid = len(trajectories)
        trajectories.append(br.trajectory(j, 0, depth, JUNCTION, parent))
        trajectories.append(br.trajectory(j, depth, None, BRANCH, (jid, depth)))
        if br.lengths[j] > depth:
            obs_parts.append(br.obs[j, depth : br.lengths[j]])
            tgt_parts.append(v_br[j, depth : br.lengths[j]])

    pairs = JunctionPair(
        obs=init.obs[traj_idx, step_idx][keep],
        a_p=br.policy_actions[:, 0][keep],
        a_f=br.actions[:, 0][keep],
        r_f=br.costs[:, 0][keep],
        v_f_next=v_f_next[keep],
        v_p=v_p[keep],
        horizon=H[keep],
    )

    n_div = int(np.sum(init.lengths < cfg.t_initial) + np.sum(br.lengths < depth + cfg.t_branch))
    steps = int(init.lengths.sum() + br.lengths.sum())
    all_costs = np.concatenate([init.costs.ravel(), br.costs.ravel()])
    stats = {
        "steps": steps,
        "divergences": n_div,
        "mean_cost": float(all_costs.sum() / max(steps, 1)),
        "pairs": len(pairs),
        "dropped_pairs": int(n_branch - keep.sum()),
    }
    log.debug("rollout iteration %d: %s", iteration, stats)
    return IterationSamples(
        obs=np.concatenate(obs_parts) if obs_parts else np.empty((0, task.obs_dim)),
        targets=np.concatenate(tgt_parts) if tgt_parts else np.empty(0),
        pairs=pairs,
        trajectories=trajectories,
        stats=stats,
    )


def evaluate_policy(policy, task, n_rollouts, horizon, seed, stream=7):
    """Mean per-step cost over ``n_rollouts`` on-policy rollouts from fixed start states."""
    x0 = initial_states(task, n_rollouts, seed, 0, stream)
    lanes = simulate(policy, task, x0, horizon)
    steps = int(lanes.lengths.sum())
    return float(lanes.costs.sum() / max(steps, 1)), lanes
