"""Training loop: collect rollouts, fit the value net, take one natural-gradient policy step."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from quadnpg import config as config_mod
from quadnpg import mlp
from quadnpg.natgrad import update_policy
from quadnpg.rollout import evaluate_policy, run_iteration
from quadnpg.value import fit_value

log = logging.getLogger(__name__)

CURVE_COLUMNS = [
    "iteration",
    "eval_cost",
    "value_loss",
    "value_iterations",
    "alpha",
    "max_mahalanobis",
    "mean_advantage",
    "pairs",
    "filtered_pairs",
    "rollout_steps",
    "divergences",
    "rollout_mean_cost",
]
TIMING_COLUMNS = ["iteration", "rollout_s", "value_s", "policy_s", "eval_s"]


@dataclass
class TrainResult:
    policy: mlp.Mlp
    value: mlp.Mlp
    curve: list = field(default_factory=list)  # dicts keyed by CURVE_COLUMNS
    timings: list = field(default_factory=list)

    @property
    def eval_costs(self):
        return np.array([row["eval_cost"] for row in self.curve])


def initial_networks(cfg):
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 999]))
    policy = mlp.Mlp.init_random(cfg.policy_sizes, rng)
    value = mlp.Mlp.init_random(cfg.value_sizes, rng)
    return policy, value


def _fmt(v):
    if v is None or v == "":
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _append_csv(path, columns, row):
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(columns)
        w.writerow([_fmt(row.get(c)) for c in columns])


def _read_csv(path):
    with open(path, newline="") as fh:
        return [{k: (float(v) if v not in ("",) else None) for k, v in r.items()} for r in csv.DictReader(fh)]


def evaluate(policy, cfg):
    return evaluate_policy(policy, cfg.task(), cfg.eval_rollouts, cfg.horizon, cfg.seed)[0]


def train(cfg, out_dir=None, resume=True):
    """Run the training loop.

    With ``out_dir`` the resolved config, networks, learning curve and phase
    timings are written there after every iteration, and an interrupted run
    continues from the last completed iteration.
    """
    task = cfg.task()
    noise_cov = cfg.rollout.noise.matrix(task.act_dim)
    policy, value = initial_networks(cfg)
    result = TrainResult(policy, value)
    start = 1

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        state_path = out / "state.json"
        if resume and state_path.exists():
            saved = config_mod.loads((out / "config.toml").read_text())
            if saved != cfg:
                raise config_mod.ConfigError(f"{out} holds a run with a different config; use a fresh directory")
            done = json.loads(state_path.read_text())["iteration"]
            policy = mlp.load(out / "policy.txt", cfg.policy_sizes)
            value = mlp.load(out / "value.txt", cfg.value_sizes)
            result = TrainResult(policy, value, _read_csv(out / "learning_curve.csv"), _read_csv(out / "timing.csv"))
            start = done + 1
            log.info("resuming %s after iteration %d", out, done)
        else:
            for name in ("learning_curve.csv", "timing.csv", "state.json"):
                (out / name).unlink(missing_ok=True)
            (out / "config.toml").write_text(config_mod.dumps(cfg))

    def record(row, timing, it):
        result.curve.append(row)
        result.timings.append(timing)
        if out is not None:
            _append_csv(out / "learning_curve.csv", CURVE_COLUMNS, row)
            _append_csv(out / "timing.csv", TIMING_COLUMNS, timing)
            mlp.save(policy, out / "policy.txt")
            mlp.save(value, out / "value.txt")
            (out / "state.json").write_text(json.dumps({"iteration": it}))

    if start == 1:
        t0 = time.perf_counter()
        cost0 = evaluate(policy, cfg)
        record({"iteration": 0, "eval_cost": cost0}, {"iteration": 0, "eval_s": time.perf_counter() - t0}, 0)
        log.info("iteration 0: eval cost %.5f", cost0)

    best, since_best = min(r["eval_cost"] for r in result.curve), 0
    for it in range(start, cfg.iterations + 1):
        t0 = time.perf_counter()
        samples = run_iteration(policy, value, task, cfg.rollout, cfg.seed, it)
        t1 = time.perf_counter()
        fit = fit_value(value, samples.obs, samples.targets, cfg.value, np.random.default_rng([cfg.seed, it, 3]))
        value = fit.value
        t2 = time.perf_counter()
        policy, stats = update_policy(policy, samples.pairs, task.gamma, noise_cov, cfg.policy)
        t3 = time.perf_counter()
        cost = evaluate(policy, cfg)
        t4 = time.perf_counter()
        row = {
            "iteration": it,
            "eval_cost": cost,
            "value_loss": fit.loss,
            "value_iterations": fit.iterations,
            "alpha": stats.alpha,
            "max_mahalanobis": stats.max_mahalanobis,
            "mean_advantage": stats.mean_advantage,
            "pairs": stats.n_pairs,
            "filtered_pairs": stats.n_filtered,
            "rollout_steps": samples.stats["steps"],
            "divergences": samples.stats["divergences"],
            "rollout_mean_cost": samples.stats["mean_cost"],
        }
        timing = {"iteration": it, "rollout_s": t1 - t0, "value_s": t2 - t1, "policy_s": t3 - t2, "eval_s": t4 - t3}
        record(row, timing, it)
        log.info("iteration %d: eval cost %.5f, value loss %.2e, alpha %.3g", it, cost, fit.loss, stats.alpha)

        if cost < best - 1e-12:
            best, since_best = cost, 0
        else:
            since_best += 1
        if cfg.plateau_patience is not None and since_best >= cfg.plateau_patience:
            log.info("stopping: no improvement for %d iterations", since_best)
            break

    result.policy, result.value = policy, value
    return result
