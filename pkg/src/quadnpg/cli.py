"""Command-line interface: ``train``, ``evaluate``, ``bench`` and ``export-traj``.

Exit codes: 0 success, 1 usage error (bad flags, bad config, unreadable
files), 2 numerical divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from quadnpg import config as config_mod
from quadnpg import evaluate as ev
from quadnpg import mlp
from quadnpg.natgrad import NoUpdateError
from quadnpg.sim import DivergenceError

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2

log = logging.getLogger("quadnpg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _resolve_config(args):
    if args.config is not None:
        cfg = config_mod.load(args.config)
    else:
        cfg = config_mod.smoke_config()
    cfg = config_mod.apply_overrides(cfg, args.set or [])
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _load_policy(path, cfg):
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"policy file not found: {path}")
    try:
        return mlp.load(path, cfg.policy_sizes)
    except ValueError as err:
        raise UsageError(str(err)) from err


def cmd_train(args):
    from quadnpg.train import train

    cfg = _resolve_config(args)
    out = Path(args.out)
    result = train(cfg, out, resume=not args.fresh)
    costs = result.eval_costs
    print(f"trained {len(costs) - 1} iterations; eval cost {costs[0]:.5f} -> {costs[-1]:.5f}; outputs in {out}")
    return EXIT_OK


def _policy_or_stub(args, cfg):
    if args.policy is None:
        return ev.pd_only_policy(cfg.policy_sizes)
    return _load_policy(args.policy, cfg)


def cmd_evaluate(args, dump=False):
    cfg = _resolve_config(args)
    policy = _policy_or_stub(args, cfg)
    task = cfg.task()
    out = None
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.toml").write_text(config_mod.dumps(cfg))
    if dump and out is None:
        raise UsageError("export-traj needs --out")
    n = args.n if args.n is not None else cfg.eval.n_rollouts
    if n < 0:
        raise UsageError("--n must be non-negative")
    eval_seed = args.seed if args.seed is not None else cfg.seed
    if args.mode == "recovery":
        report = ev.recovery(policy, task, cfg.eval, seed=eval_seed, n=n, out_dir=out)
    else:
        report = ev.waypoint(policy, task, cfg.eval, out_dir=out)
    report.mean_latency_us = ev.bench_inference(policy, reps=10_000)["mean_us"]
    print(report.summary())
    print(f"policy evaluation: {report.mean_latency_us:.2f} us mean")
    for path in report.trajectory_csv:
        print(f"wrote {path}")
    if out is not None:
        (out / f"{args.mode}_report.json").write_text(json.dumps(report.__dict__, indent=2) + "\n")
    return EXIT_OK


def cmd_bench(args):
    if args.mode == "inference":
        cfg = _resolve_config(args)
        if args.policy:
            policy = _load_policy(args.policy, cfg)
        else:
            # random full-size network; timing does not depend on the weights
            policy = mlp.Mlp.init_random(cfg.policy_sizes, np.random.default_rng(0), zero_output=False)
        res = ev.bench_inference(policy, reps=args.reps)
        print(f"policy inference: median {res['median_us']:.2f} us, p99 {res['p99_us']:.2f} us over {res['reps']} calls")
    else:
        res = ev.bench_solver(n_problems=args.problems, seed=args.seed or 0)
        print(
            f"natural gradient on {res['jacobian_shape'][0]}x{res['jacobian_shape'][1]} Jacobians: "
            f"svd {res['svd_ms']:.3f} ms, cg {res['cg_ms']:.3f} ms (ratio {res['ratio_cg_over_svd']:.2f})"
        )
        print(f"residuals: svd {res['max_residual_svd']:.2e}, cg {res['max_residual_cg']:.2e}; max disagreement {res['max_svd_cg_disagreement']:.2e}")
    if args.json:
        print(json.dumps(res))
    return EXIT_OK


def build_parser():
    p = _Parser(prog="quadnpg", description="Train and evaluate natural-gradient quadrotor controllers.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed_help="run seed"):
        sp.add_argument("--config", help="TOML config file (default: built-in smoke config)")
        sp.add_argument("--seed", type=int, help=seed_help)
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key, e.g. rollout.n_branch=32")

    t = sub.add_parser("train", help="run the training loop")
    common(t)
    t.add_argument("--out", required=True, help="output directory (resumed if it holds a matching run)")
    t.add_argument("--fresh", action="store_true", help="ignore any checkpoint in --out")

    for name, hlp in (("evaluate", "recovery or waypoint evaluation"), ("export-traj", "write evaluation trajectories as CSV")):
        e = sub.add_parser(name, help=hlp)
        common(e, "evaluation seed")
        e.add_argument("--policy", help="policy file (default: hover bias + PD only)")
        e.add_argument("--mode", choices=("recovery", "waypoint"), default="recovery")
        e.add_argument("--n", type=int, help="number of recovery rollouts")
        e.add_argument("--out", help="directory for reports and trajectory CSVs")

    b = sub.add_parser("bench", help="timing benchmarks")
    common(b)
    b.add_argument("--mode", choices=("inference", "solver"), default="inference")
    b.add_argument("--policy", help="policy file for the inference benchmark")
    b.add_argument("--reps", type=int, default=100_000)
    b.add_argument("--problems", type=int, default=20)
    b.add_argument("--json", action="store_true", help="also print the raw result as JSON")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            return cmd_train(args)
        if args.command == "evaluate":
            return cmd_evaluate(args)
        if args.command == "export-traj":
            return cmd_evaluate(args, dump=True)
        return cmd_bench(args)
    except (UsageError, config_mod.ConfigError) as err:
        print(f"quadnpg: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, NoUpdateError) as err:
        print(f"quadnpg: numerical divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
