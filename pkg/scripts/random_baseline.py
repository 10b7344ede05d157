"""Score distribution of random-parameter policies on the built-in game.

This is the baseline the learning-signal acceptance criterion compares
against: parameters drawn from the optimizer's initial distribution
N(0, 0.5^2 I), one episode each.
"""

from __future__ import annotations

import argparse

import numpy as np

from cosevo.env import EnvConfig, ShooterEnv, wrap_frame_skip
from cosevo.policy import param_count, unflatten
from cosevo.trainer import derive_seed, run_episode


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--k", type=int, default=32)
    parser.add_argument("--p", type=float, default=25.0)
    parser.add_argument("--policies", type=int, default=100)
    parser.add_argument("--height", type=int, default=84)
    parser.add_argument("--width", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    env_config = EnvConfig(height=args.height, width=args.width)
    env = wrap_frame_skip(ShooterEnv(env_config), env_config.frame_skip)
    dim = param_count(args.k, 1, 6, False)
    rng = np.random.default_rng(derive_seed(args.seed, "baseline"))
    scores = []
    for i in range(args.policies):
        params = unflatten(rng.standard_normal(dim) * 0.5, args.k, 1, 6)
        scores.append(
            run_episode(env, params, args.k, args.p,
                        derive_seed(args.seed, "baseline-ep", i))
        )
    arr = np.asarray(scores)
    print(f"policies: {args.policies}  (k={args.k}, p={args.p}, "
          f"{args.height}x{args.width})")
    print(f"mean {arr.mean():.1f}  median {np.median(arr):.1f}  "
          f"std {arr.std():.1f}  min {arr.min():.0f}  max {arr.max():.0f}")
    print(f"2x mean = {2 * arr.mean():.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
