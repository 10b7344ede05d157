"""Reference runs of the optimizer on standard benchmark functions.

Records the evaluation counts backing the regression bounds asserted in the
acceptance suite: sphere in d = 5 and 10 to |mean| < 1e-6, and Rosenbrock
in d = 5 to f < 1e-6 (maximization of the negated functions).
"""

from __future__ import annotations

import statistics
import sys

import numpy as np

from cosevo import cmaes


def sphere(x: np.ndarray) -> float:
    return -float(np.sum(x * x))


def rosenbrock(x: np.ndarray) -> float:
    return -float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def run_sphere(dim: int, seed: int, max_evals: int = 20_000) -> int | None:
    state = cmaes.init(
        cmaes.CmaConfig(dimension=dim, initial_sigma=0.5, seed=seed,
                        initial_mean=np.full(dim, 1.0))
    )
    evals = 0
    while evals < max_evals:
        cands = cmaes.ask(state)
        fits = [sphere(c) for c in cands]
        evals += len(cands)
        state = cmaes.tell(state, cands, fits)
        if float(np.linalg.norm(state.mean)) < 1e-6:
            return evals
    return None


def run_rosenbrock(dim: int, seed: int, max_evals: int = 100_000) -> int | None:
    state = cmaes.init(
        cmaes.CmaConfig(dimension=dim, initial_sigma=0.5, seed=seed,
                        initial_mean=np.zeros(dim))
    )
    evals = 0
    while evals < max_evals:
        cands = cmaes.ask(state)
        fits = [rosenbrock(c) for c in cands]
        evals += len(cands)
        state = cmaes.tell(state, cands, fits)
        if -rosenbrock(state.mean) < 1e-6:
            return evals
    return None


def main() -> int:
    seeds = range(10)
    for dim in (5, 10):
        counts = [run_sphere(dim, s) for s in seeds]
        solved = [c for c in counts if c is not None]
        print(f"sphere d={dim}: solved {len(solved)}/10, "
              f"median evals {statistics.median(solved) if solved else 'n/a'}, "
              f"max {max(solved) if solved else 'n/a'}")
    counts = [run_rosenbrock(5, s) for s in seeds]
    solved = [c for c in counts if c is not None]
    print(f"rosenbrock d=5: solved {len(solved)}/10, "
          f"median evals {statistics.median(solved) if solved else 'n/a'}, "
          f"max {max(solved) if solved else 'n/a'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
