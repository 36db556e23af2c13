"""Full-scale training run (512/1024 trajectories, 600 steps, depth 2). Hours on one core; resumable."""
import argparse
import logging

from quadnpg.config import full_config, load
from quadnpg.evaluate import recovery
from quadnpg.train import train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="TOML config (default: built-in full config)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/full")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load(args.config) if args.config else full_config(args.seed)
    res = train(cfg, args.out)
    c = res.eval_costs
    print(f"eval cost {c[0]:.4f} -> {c[-1]:.4f} after {len(c) - 1} iterations")
    print(recovery(res.policy, cfg.task(), cfg.eval, seed=123).summary())


if __name__ == "__main__":
    main()
