"""Evaluation suites: recovery from random states, square waypoint tracking, timing benchmarks.

Evaluation adds a ground plane that training never sees: a rollout fails as
soon as its altitude reaches zero (or the simulation diverges). Rollouts are
simulated relative to the hold point, so the start altitude only shifts the
ground; lowering it can never turn a failure into a success.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from quadnpg import natgrad
from quadnpg.env import InitDistribution, observe
from quadnpg.mlp import Mlp, batch_forward, batch_output_jacobian
from quadnpg.rollout import initial_states, simulate
from quadnpg.sim import QuadState


@dataclass(frozen=True)
class EvalConfig:
    n_rollouts: int = 100
    altitude: float = 2.0
    duration: float = 5.0  # seconds per recovery rollout
    dwell: float = 4.0  # seconds per waypoint
    square_size: float = 1.0
    settle_window: float = 1.0  # trailing seconds of each dwell used for steady-state error


@dataclass
class EvalReport:
    mode: str
    n_rollouts: int = 0
    failures: int = 0
    failure_rate: float = 0.0
    mean_tracking_error: float = float("nan")
    max_tracking_error: float = float("nan")
    steady_state_error: float = float("nan")
    mean_cost: float = float("nan")
    mean_latency_us: float = float("nan")
    trajectory_csv: list = field(default_factory=list)

    def summary(self):
        if self.mode == "recovery":
            return f"recovery: {self.failures}/{self.n_rollouts} failures (rate {self.failure_rate:.3f})"
        return (
            f"waypoint: mean error {self.mean_tracking_error:.4f} m, max {self.max_tracking_error:.4f} m, "
            f"steady-state {self.steady_state_error:.4f} m"
        )


TRAJ_HEADER = (
    ["rollout", "t", "px", "py", "pz"]
    + [f"R{i}{j}" for i in range(3) for j in range(3)]
    + ["vx", "vy", "vz", "wx", "wy", "wz", "T0", "T1", "T2", "T3"]
)


def write_trajectories(path, task, runs, offset=None):
    """CSV rows ``(rollout, t, p, R row-major, v, w, T)``; ``runs`` is a list of (states, actions)."""
    dt = task.params.dt
    offset = np.zeros(3) if offset is None else np.asarray(offset)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJ_HEADER)
        for k, (states, actions) in enumerate(runs):
            T = np.maximum(task.raw_thrusts(states[:-1], actions), 0.0) if len(actions) else np.zeros((0, 4))
            for t, x in enumerate(states):
                thrust = T[t] if t < len(T) else np.full(4, np.nan)
                row = np.concatenate([x[:3] + offset, x[3:], thrust])
                w.writerow([k, repr(round(t * dt, 10))] + [repr(float(v)) for v in row])


def recovery(policy, task, cfg=EvalConfig(), seed=0, n=None, out_dir=None):
    """Failure rate over ``n`` rollouts from orientation-uniform, box-uniform start states."""
    n = cfg.n_rollouts if n is None else n
    if n == 0:
        return EvalReport("recovery")
    eval_task = _with_init(task, InitDistribution(1.0, 1.0, 1.0))
    steps = int(round(cfg.duration / task.params.dt))
    x0 = initial_states(eval_task, n, seed, 0, stream=11)
    lanes = simulate(policy, eval_task, x0, steps)
    fail = failures(lanes, cfg.altitude, steps)
    valid = max(int(lanes.lengths.sum()), 1)
    report = EvalReport(
        "recovery",
        n_rollouts=n,
        failures=int(fail.sum()),
        failure_rate=float(fail.mean()),
        mean_cost=float(lanes.costs.sum() / valid),
    )
    if out_dir is not None:
        path = Path(out_dir) / "recovery_trajectories.csv"
        runs = [(lanes.states[i, : lanes.lengths[i] + 1], lanes.actions[i, : lanes.lengths[i]]) for i in range(n)]
        write_trajectories(path, eval_task, runs, offset=(0.0, 0.0, cfg.altitude))
        report.trajectory_csv.append(str(path))
    return report


def failures(lanes, altitude, steps):
    """Lanes that touch the ground (z <= -altitude relative to the hold point) or diverge."""
    z = lanes.states[:, :, 2]
    t = np.arange(z.shape[1])[None, :]
    valid = t <= lanes.lengths[:, None]
    touched = np.any(valid & (z + altitude <= 0.0), axis=1)
    return touched | (lanes.lengths < steps)


def _with_init(task, init):
    from dataclasses import replace

    return replace(task, init=init)


def waypoint(policy, task, cfg=EvalConfig(), out_dir=None):
    """Cycle the four corners of a square, feeding the policy the state minus the current waypoint."""
    s = cfg.square_size
    corners = np.array([[0.0, 0.0, 0.0], [s, 0.0, 0.0], [s, s, 0.0], [0.0, s, 0.0]])
    dwell = int(round(cfg.dwell / task.params.dt))
    settle = max(1, int(round(cfg.settle_window / task.params.dt)))
    x = QuadState().to_array()[None, :]
    states, actions, errors, settled = [x[0]], [], [], []
    for wp in corners:
        for t in range(dwell):
            st = QuadState.from_array(x)
            a = batch_forward(policy, observe(st, wp, task.scales))
            x, _, ok = task.transition(x, a)
            if not ok[0]:
                break
            err = float(np.linalg.norm(x[0, :3] - wp))
            errors.append(err)
            if t >= dwell - settle:
                settled.append(err)
            states.append(x[0])
            actions.append(a[0])
    report = EvalReport(
        "waypoint",
        n_rollouts=1,
        failures=int(len(errors) < 4 * dwell),
        failure_rate=float(len(errors) < 4 * dwell),
        mean_tracking_error=float(np.mean(errors)) if errors else float("nan"),
        max_tracking_error=float(np.max(errors)) if errors else float("nan"),
        steady_state_error=float(np.mean(settled)) if settled else float("nan"),
    )
    if out_dir is not None:
        path = Path(out_dir) / "waypoint_trajectory.csv"
        write_trajectories(path, task, [(np.array(states), np.array(actions).reshape(-1, 4))], offset=(0.0, 0.0, cfg.altitude))
        report.trajectory_csv.append(str(path))
    return report


def pd_only_policy(sizes=(18, 64, 64, 4)):
    """Zero-output network: the command is hover bias plus the PD attitude loop."""
    return Mlp(sizes)


class FastPolicy:
    """Single-observation evaluator with preallocated buffers."""

    def __init__(self, net):
        self.layers = [(np.ascontiguousarray(W.T), b.copy()) for W, b in zip(net.weights, net.biases)]
        self.bufs = [np.empty(len(b)) for _, b in self.layers]

    def __call__(self, x):
        h = x
        last = len(self.layers) - 1
        for i, ((Wt, b), out) in enumerate(zip(self.layers, self.bufs)):
            np.dot(Wt, h, out=out)
            out += b
            if i < last:
                np.tanh(out, out=out)
            h = out
        return h


def bench_inference(policy, reps=100_000, seed=0):
    """Per-call latency (microseconds) of single-observation policy evaluation."""
    rng = np.random.default_rng(seed)
    f = FastPolicy(policy)
    x = rng.standard_normal(policy.input_dim)
    for _ in range(1000):
        f(x)
    times = np.empty(reps)
    clock = time.perf_counter_ns
    for i in range(reps):
        t0 = clock()
        f(x)
        times[i] = clock() - t0
    us = times / 1e3
    return {"median_us": float(np.median(us)), "mean_us": float(np.mean(us)), "p99_us": float(np.percentile(us, 99)), "reps": reps}


def bench_solver(policy=None, n_problems=20, seed=0, sigma=0.33):
    """Time the SVD and conjugate-gradient natural-gradient solves on policy Jacobians."""
    rng = np.random.default_rng(seed)
    if policy is None:
        policy = Mlp.init_random((18, 64, 64, 4), rng, zero_output=False)
    obs = rng.standard_normal((n_problems, policy.input_dim))
    J = batch_output_jacobian(policy, obs)
    D = np.eye(4) / sigma**2
    g_a = rng.standard_normal((n_problems, 4))

    def run(fn):
        out, t = [], []
        for k in range(n_problems):
            t0 = time.perf_counter()
            out.append(fn(J[k], D, g_a[k]))
            t.append(time.perf_counter() - t0)
        return out, 1e3 * float(np.median(t))

    svd, t_svd = run(natgrad.natural_gradient_svd)
    cg, t_cg = run(natgrad.natural_gradient_cg)

    def residual(J, r):
        return float(np.linalg.norm(J.T @ (D @ (J @ r.n)) - r.g) / np.linalg.norm(r.g))

    res_svd = [residual(J[k], svd[k]) for k in range(n_problems)]
    res_cg = [residual(J[k], cg[k]) for k in range(n_problems)]
    agree = [float(np.linalg.norm(svd[k].n - cg[k].n) / np.linalg.norm(svd[k].n)) for k in range(n_problems)]
    return {
        "svd_ms": t_svd,
        "cg_ms": t_cg,
        "ratio_cg_over_svd": t_cg / t_svd,
        "max_residual_svd": max(res_svd),
        "max_residual_cg": max(res_cg),
        "max_svd_cg_disagreement": max(agree),
        "jacobian_shape": list(J.shape[1:]),
    }
