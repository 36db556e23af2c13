"""Train the smoke config on several seeds and compare against the PD-only stub."""
import argparse
import time
from pathlib import Path

from quadnpg.config import smoke_config
from quadnpg.evaluate import pd_only_policy, recovery
from quadnpg.train import train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--out", default="runs/smoke")
    ap.add_argument("--recovery-seed", type=int, default=123)
    args = ap.parse_args()

    task = smoke_config().task()
    pd = recovery(pd_only_policy(), task, seed=args.recovery_seed, n=100)
    print(f"PD-only stub: {pd.failures}/100 recovery failures")
    improved = 0
    for seed in args.seeds:
        t0 = time.perf_counter()
        res = train(smoke_config(seed), Path(args.out) / f"seed{seed}")
        c = res.eval_costs
        rec = recovery(res.policy, task, seed=args.recovery_seed, n=100)
        improved += c[-1] < c[0]
        print(
            f"seed {seed}: eval cost {c[0]:.5f} -> {c[-1]:.5f} (x{c[-1] / c[0]:.3f}), "
            f"recovery failures {rec.failures}/100, {time.perf_counter() - t0:.0f} s"
        )
    print(f"eval cost reduced in {improved}/{len(args.seeds)} seeds")


if __name__ == "__main__":
    main()
