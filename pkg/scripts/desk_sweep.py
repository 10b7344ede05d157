"""A small ready-made (k, p) sweep on the built-in game.

Writes heatmap.csv and scores_raw.csv to --out; rerunning with the same
output directory resumes where it stopped.
"""

from __future__ import annotations

import argparse

from cosevo.env import EnvConfig
from cosevo.sweep import SweepGrid, export_heatmap, run_sweep
from cosevo.trainer import TrainConfig


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="sweeps/desk")
    parser.add_argument("--trials", type=int, default=3)
    parser.add_argument("--generations", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    env = EnvConfig(height=84, width=64)
    grid = SweepGrid(
        k_values=(8, 16, 24, 32),
        p_values=(0.25, 10.0, 25.0, 50.0),
        trials_per_cell=args.trials,
        generations_per_trial=args.generations,
        master_seed=args.seed,
    )
    base = TrainConfig(env=env, parallelism=2)
    cells = run_sweep(
        grid,
        base,
        out_dir=args.out,
        progress=lambda k, p, t, s: print(f"k={k} p={p} trial={t}: {s}", flush=True),
    )
    export_heatmap(cells, f"{args.out}/heatmap.csv")
    ranked = sorted(
        (c for c in cells if c.valid), key=lambda c: c.stats()["mean"], reverse=True
    )
    print("\ntop cells by mean best score:")
    for cell in ranked[:5]:
        s = cell.stats()
        print(f"  k={cell.k:3d} p={cell.p:5.2f}  mean {s['mean']:.1f}  max {s['max']:.0f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
