"""Grid sweep over truncation level and sparsity percentile.

Each (k, p) cell runs several independent short trainings whose seeds derive
from (master_seed, k, p, trial), so cells never influence one another and a
partial sweep can be resumed by rerunning with the same output directory.
Cell statistics export as a heatmap-ready CSV.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

import numpy as np

from .env import EnvConfig
from .errors import ConfigError
from .trainer import EnvSource, TrainConfig, derive_seed, train

# the six configurations promoted to long trials by default
LONG_TRIAL_SHORTLIST: tuple[tuple[int, float], ...] = (
    (50, 0.95),
    (75, 0.25),
    (125, 10.0),
    (125, 25.0),
    (150, 0.9),
    (150, 10.0),
)

DEFAULT_K_VALUES = (25, 50, 75, 100, 125, 150)
DEFAULT_P_VALUES = (0.25, 0.9, 0.95, 5.0, 10.0, 25.0, 50.0)

HEATMAP_COLUMNS = ("k", "p", "trials", "mean", "std", "min", "p25", "p75", "max")


@dataclass(frozen=True)
class SweepGrid:
    k_values: tuple[int, ...] = DEFAULT_K_VALUES
    p_values: tuple[float, ...] = DEFAULT_P_VALUES
    trials_per_cell: int = 5
    generations_per_trial: int = 50
    master_seed: int = 0

    def validate(self, env: EnvConfig) -> None:
        limit = min(env.height, env.width)
        for k in self.k_values:
            if not 1 <= k < limit:
                raise ConfigError(f"k={k} must satisfy 1 <= k < {limit}")
        for p in self.p_values:
            if not 0.0 <= p < 100.0:
                raise ConfigError(f"p={p} must lie in [0, 100)")
        if self.trials_per_cell < 1 or self.generations_per_trial < 0:
            raise ConfigError("trials_per_cell must be >= 1 and generations >= 0")


@dataclass(frozen=True)
class SweepCell:
    k: int
    p: float
    scores: tuple[float, ...]
    failures: int = 0

    @property
    def valid(self) -> bool:
        return len(self.scores) > 0

    def stats(self) -> dict[str, float]:
        arr = np.asarray(self.scores, dtype=np.float64)
        return {
            "mean": float(arr.mean()),
            "std": float(arr.std()),
            "min": float(arr.min()),
            "p25": float(np.percentile(arr, 25)),
            "p75": float(np.percentile(arr, 75)),
            "max": float(arr.max()),
        }


def aggregate(scores: list[float]) -> tuple[float, float, float, float | None]:
    """(mean, population std, best, top-5 mean or None for short lists)."""
    if not scores:
        raise ConfigError("cannot aggregate an empty score list")
    arr = np.asarray(scores, dtype=np.float64)
    top5 = float(np.mean(np.sort(arr)[-5:])) if arr.size >= 5 else None
    return float(arr.mean()), float(arr.std()), float(arr.max()), top5


def _trial_config(base: TrainConfig, grid: SweepGrid, k: int, p: float, trial: int) -> TrainConfig:
    return dataclasses.replace(
        base,
        k=k,
        p=float(p),
        generations=grid.generations_per_trial,
        master_seed=derive_seed(grid.master_seed, "sweep", k, float(p), trial),
    )


def run_sweep(
    grid: SweepGrid,
    base: TrainConfig,
    out_dir: str | None = None,
    env_source: EnvSource | None = None,
    progress=None,
) -> list[SweepCell]:
    """Run every (k, p) cell; per-cell failures are recorded, not fatal.

    With an out_dir, raw per-trial scores are appended to scores_raw.csv as
    they finish and already-recorded trials are skipped on rerun.
    """
    grid.validate(base.env)
    done: dict[tuple[int, float, int], float] = {}
    raw_path = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        raw_path = os.path.join(out_dir, "scores_raw.csv")
        done = _load_raw(raw_path)

    cells: list[SweepCell] = []
    for k in grid.k_values:
        for p in grid.p_values:
            scores: list[float] = []
            failures = 0
            for trial in range(grid.trials_per_cell):
                key = (k, float(p), trial)
                if key in done:
                    scores.append(done[key])
                    continue
                try:
                    result = train(
                        _trial_config(base, grid, k, p, trial), env_source=env_source
                    )
                    score = (
                        result.best_fitness if result.best_fitness is not None else 0.0
                    )
                except Exception:
                    failures += 1
                    continue
                scores.append(score)
                if raw_path:
                    _append_raw(raw_path, k, float(p), trial, score)
                if progress:
                    progress(k, p, trial, score)
            cells.append(
                SweepCell(k=k, p=float(p), scores=tuple(scores), failures=failures)
            )
    return cells


def _load_raw(path: str) -> dict[tuple[int, float, int], float]:
    done: dict[tuple[int, float, int], float] = {}
    if not os.path.exists(path):
        return done
    with open(path) as fh:
        header = fh.readline()
        if header.strip() != "k,p,trial,score":
            raise ConfigError(f"{path} is not a sweep raw-score file")
        for line in fh:
            k, p, trial, score = line.strip().split(",")
            done[(int(k), float(p), int(trial))] = float(score)
    return done


def _append_raw(path: str, k: int, p: float, trial: int, score: float) -> None:
    new = not os.path.exists(path)
    with open(path, "a") as fh:
        if new:
            fh.write("k,p,trial,score\n")
        fh.write(f"{k},{p!r},{trial},{score!r}\n")


def export_heatmap(cells: list[SweepCell], path: str) -> None:
    """One CSV row of score statistics per cell, sorted by (k, p).

    Printed floats use repr, which round-trips float64 exactly. Cells whose
    every trial failed are marked with trials=0 and empty statistics.
    """
    if not cells:
        raise ConfigError("no cells to export")
    with open(path, "w") as fh:
        fh.write(",".join(HEATMAP_COLUMNS) + "\n")
        for cell in sorted(cells, key=lambda c: (c.k, c.p)):
            if not cell.valid:
                fh.write(f"{cell.k},{cell.p!r},0,,,,,,\n")
                continue
            s = cell.stats()
            fh.write(
                f"{cell.k},{cell.p!r},{len(cell.scores)},{s['mean']!r},{s['std']!r},"
                f"{s['min']!r},{s['p25']!r},{s['p75']!r},{s['max']!r}\n"
            )
