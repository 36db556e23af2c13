"""Compare the junction-pair gradient estimate with the closed-form gradient on the scalar LQ problem."""
import argparse

import numpy as np

from quadnpg.mlp import Mlp, batch_output_jacobian
from quadnpg.natgrad import action_gradient, advantage
from quadnpg.rollout import NoiseSpec, RolloutConfig, run_iteration
from quadnpg.toy import LinearQuadraticTask


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gains", type=float, nargs="+", default=[-0.8, -1.2, -1.6, -2.4])
    ap.add_argument("--pairs", type=int, default=10_000)
    ap.add_argument("--sigma", type=float, default=1e-3)
    args = ap.parse_args()

    task = LinearQuadraticTask()
    cfg = RolloutConfig(n_initial=200, n_branch=args.pairs, t_initial=100, t_branch=100, noise=NoiseSpec(sigma=args.sigma, depth=1))
    for k in args.gains:
        policy = Mlp([1, 1], np.array([k, 0.0]))
        s = run_iteration(policy, Mlp([1, 1]), task, cfg, seed=0, iteration=1)
        A = advantage(s.pairs, task.gamma)
        J = batch_output_jacobian(policy, s.pairs.obs)
        est = np.einsum("kap,ka->p", J, action_gradient(s.pairs, A)) / len(s.pairs)
        exact = task.policy_gradient(k, s.pairs.obs)
        err = np.linalg.norm(est - exact) / np.linalg.norm(exact)
        print(f"k={k:+.2f}: estimate {est}, closed form {exact}, relative error {err:.4f}")


if __name__ == "__main__":
    main()
