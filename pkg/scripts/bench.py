"""Policy inference latency and natural-gradient solver timing."""
import argparse

import numpy as np

from quadnpg.evaluate import bench_inference, bench_solver
from quadnpg.mlp import Mlp


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=100_000)
    ap.add_argument("--problems", type=int, default=50)
    args = ap.parse_args()

    net = Mlp.init_random([18, 64, 64, 4], np.random.default_rng(0), zero_output=False)
    inf = bench_inference(net, reps=args.reps)
    print(f"inference: median {inf['median_us']:.2f} us, p99 {inf['p99_us']:.2f} us ({inf['reps']} calls)")
    sol = bench_solver(net, n_problems=args.problems)
    print(f"solver on 4x5636: svd {sol['svd_ms']:.3f} ms, cg(10) {sol['cg_ms']:.3f} ms, ratio {sol['ratio_cg_over_svd']:.2f}")
    print(f"max residual svd {sol['max_residual_svd']:.1e}, cg {sol['max_residual_cg']:.1e}, disagreement {sol['max_svd_cg_disagreement']:.1e}")


if __name__ == "__main__":
    main()
