import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadnpg.env import QuadTask
from quadnpg.mlp import Mlp, batch_forward
from quadnpg.natgrad import advantage
from quadnpg.rollout import (
    BRANCH,
    INITIAL,
    JUNCTION,
    NoiseSpec,
    RolloutConfig,
    Trajectory,
    discounted_values,
    mc_values,
    run_iteration,
    simulate,
)

TASK = QuadTask()
SMALL = RolloutConfig(n_initial=3, n_branch=5, t_initial=20, t_branch=15)


def nets(seed=0):
    rng = np.random.default_rng(seed)
    policy = Mlp.init_random([18, 16, 4], rng, zero_output=False)
    policy.weights[-1] *= 0.05
    value = Mlp.init_random([18, 16, 1], rng, zero_output=False)
    return policy, value


def const_value(c):
    net = Mlp([18, 1])
    net.biases[0][:] = c
    return net


def traj_with(costs, obs_dim=18):
    T = len(costs)
    return Trajectory(np.zeros((T + 1, 18)), np.zeros((T + 1, obs_dim)), np.zeros((T, 4)), np.asarray(costs, float))


def double_sum(costs, terminal, gamma):
    T = len(costs)
    return np.array([sum(gamma ** (t - i) * costs[t] for t in range(i, T)) + gamma ** (T - i) * terminal for i in range(T + 1)])


def test_default_step_budget():
    assert RolloutConfig().expected_steps() == 512 * 600 + 1024 * 602 == 923_648


def test_mc_value_two_steps():
    v = mc_values(traj_with([1.0, 1.0]), const_value(10.0), 0.99)
    assert v[0] == pytest.approx(11.791, abs=1e-12)


def test_mc_value_geometric_tail():
    v = mc_values(traj_with(np.zeros(7)), const_value(3.0), 0.9)
    assert np.allclose(v, 3.0 * 0.9 ** np.arange(7, -1, -1), rtol=1e-14)


@given(st.integers(0, 2**31 - 1), st.floats(0.5, 0.999))
@settings(max_examples=20, deadline=None)
def test_mc_values_match_double_sum(seed, gamma):
    rng = np.random.default_rng(seed)
    costs = rng.uniform(0, 2, 50)
    term = float(rng.normal())
    v = mc_values(traj_with(costs), const_value(term), gamma)
    assert np.max(np.abs(v - double_sum(costs, term, gamma))) <= 1e-12


def test_discounted_values_respects_lengths():
    costs = np.array([[1.0, 1.0, 1.0], [1.0, 5.0, 5.0]])
    v = discounted_values(costs, np.array([3, 1]), np.array([0.0, 2.0]), 0.5)
    assert v[0, 0] == pytest.approx(1.75)
    assert v[1, 0] == pytest.approx(1.0 + 0.5 * 2.0)
    assert np.all(v[1, 1:] == 2.0)


def test_noise_spec_requires_full_rank():
    with pytest.raises(ValueError):
        NoiseSpec(covariance=((1.0, 0, 0, 0), (0, 1.0, 0, 0), (0, 0, 1.0, 0), (0, 0, 0, 0.0))).matrix()
    assert np.allclose(NoiseSpec(sigma=0.5).matrix(), 0.25 * np.eye(4))


def test_run_iteration_shapes_and_counts():
    policy, value = nets()
    s = run_iteration(policy, value, TASK, SMALL, seed=1, iteration=1)
    assert s.stats["divergences"] == 0
    assert s.stats["steps"] == SMALL.expected_steps()
    assert len(s.pairs) == SMALL.n_branch
    kinds = [t.kind for t in s.trajectories]
    assert kinds.count(INITIAL) == 3 and kinds.count(JUNCTION) == 5 and kinds.count(BRANCH) == 5
    on_policy = sum(len(t) for t in s.trajectories if t.kind != JUNCTION)
    assert len(s.obs) == len(s.targets) == on_policy
    for t in s.trajectories:
        assert len(t.actions) == len(t.costs) == len(t.states) - 1


def test_junction_and_branch_attach_to_parents():
    policy, value = nets(1)
    s = run_iteration(policy, value, TASK, SMALL, seed=2, iteration=1)
    trajs = s.trajectories
    for t in trajs:
        if t.kind == INITIAL:
            continue
        pid, step = t.parent
        assert np.array_equal(t.states[0], trajs[pid].states[step])
        if t.kind == JUNCTION:
            assert trajs[pid].kind == INITIAL
            assert len(t) == SMALL.noise.depth
        else:
            assert trajs[pid].kind == JUNCTION
    junctions = [t for t in trajs if t.kind == JUNCTION]
    for t, pair in zip(junctions, s.pairs):
        assert np.array_equal(pair.obs, t.observations[0])
        assert not np.array_equal(pair.a_f, pair.a_p)


def test_pair_values_recomputed_from_trajectories():
    policy, value = nets(2)
    s = run_iteration(policy, value, TASK, SMALL, seed=3, iteration=1)
    trajs = s.trajectories
    gamma = TASK.gamma
    junctions = [(i, t) for i, t in enumerate(trajs) if t.kind == JUNCTION]
    for (jid, junc), pair in zip(junctions, s.pairs):
        branch = trajs[jid + 1]
        H = int(pair.horizon)
        # perturbed continuation from the post-junction state, truncated to the matched horizon
        states = np.concatenate([junc.states[1:], branch.states[1:]])[:H]
        obs = np.concatenate([junc.observations[1:], branch.observations[1:]])[:H]
        costs = np.concatenate([junc.costs[1:], branch.costs])[: H - 1]
        seg = Trajectory(states, obs, np.zeros((H - 1, 4)), costs)
        assert pair.v_f_next == pytest.approx(mc_values(seg, value, gamma)[0], abs=1e-12)
        parent, step = trajs[junc.parent[0]], junc.parent[1]
        on = Trajectory(parent.states[step : step + H + 1], parent.observations[step : step + H + 1], parent.actions[step : step + H], parent.costs[step : step + H])
        assert pair.v_p == pytest.approx(mc_values(on, value, gamma)[0], abs=1e-12)
        assert pair.r_f == junc.costs[0]


def test_vanishing_noise_gives_vanishing_advantage():
    policy, value = nets(3)
    cfg = RolloutConfig(n_initial=4, n_branch=16, t_initial=30, t_branch=30, noise=NoiseSpec(sigma=1e-12))
    s = run_iteration(policy, value, TASK, cfg, seed=4, iteration=1)
    A = advantage(s.pairs, TASK.gamma)
    assert len(A) == 16
    assert np.max(np.abs(A)) <= 1e-6


def test_identical_branches_identical_advantages():
    policy, _ = nets(4)
    x0 = np.repeat(TASK.initial_state(np.random.default_rng(5))[None], 2, axis=0)
    noise = np.repeat(np.random.default_rng(6).normal(0, 0.33, (1, 2, 4)), 2, axis=0)
    lanes = simulate(policy, TASK, x0, 40, noise)
    assert np.array_equal(lanes.costs[0], lanes.costs[1])
    assert np.array_equal(lanes.states[0], lanes.states[1])


def test_run_iteration_deterministic():
    policy, value = nets(5)
    a = run_iteration(policy, value, TASK, SMALL, seed=7, iteration=3)
    b = run_iteration(policy, value, TASK, SMALL, seed=7, iteration=3)
    assert np.array_equal(a.obs, b.obs) and np.array_equal(a.targets, b.targets)
    for k in a.pairs._keys:
        assert np.array_equal(getattr(a.pairs, k), getattr(b.pairs, k))
    c = run_iteration(policy, value, TASK, SMALL, seed=8, iteration=3)
    assert not np.array_equal(a.targets, c.targets)


def test_lane_independent_of_batch_size():
    policy, value = nets(6)
    big = run_iteration(policy, value, TASK, RolloutConfig(4, 2, 10, 5), seed=9, iteration=1)
    small = run_iteration(policy, value, TASK, RolloutConfig(2, 2, 10, 5), seed=9, iteration=1)
    assert np.array_equal(big.trajectories[1].states, small.trajectories[1].states)


def test_diverging_lane_truncated_and_frozen():
    spin = Mlp([18, 4])
    spin.biases[0][:] = [50.0, 0.0, 50.0, 0.0]
    x0 = np.stack([TASK.initial_state(np.random.default_rng(0))] * 2)
    lanes = simulate(spin, TASK, x0, 300)
    n = lanes.lengths[0]
    assert 0 < n < 300
    assert np.all(lanes.costs[0, n:] == 0)
    assert np.all(lanes.states[0, n + 1 :] == lanes.states[0, n])
    assert np.all(np.isfinite(lanes.states))


def test_divergence_counted_and_values_finite():
    spin = Mlp([18, 4])
    spin.biases[0][:] = [50.0, 0.0, 50.0, 0.0]
    value = const_value(1.0)
    s = run_iteration(spin, value, TASK, RolloutConfig(2, 3, 200, 50), seed=0, iteration=0)
    assert s.stats["divergences"] >= 2
    assert np.all(np.isfinite(s.targets))
    assert np.all(np.isfinite(advantage(s.pairs, TASK.gamma)))


def test_zero_output_policy_hovers_in_place():
    x0 = np.zeros((1, 18))
    x0[0, 3:12] = np.eye(3).ravel()
    lanes = simulate(Mlp([18, 4]), TASK, x0, 1000)
    assert np.max(np.abs(lanes.states[0, :, :3])) <= 1e-6
    assert np.array_equal(batch_forward(Mlp([18, 4]), lanes.obs[0]), np.zeros((1001, 4)))
