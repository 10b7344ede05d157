"""Acceptance suite: one test per shipping criterion, each printing a
PASS/FAIL line with its measured numbers (run with -s to watch live).

The heavyweight entries (end-to-end determinism, learning signal) train on a
reduced 84x64 canvas so the whole suite fits a desk-scale compute budget;
every stated pipeline parameter (k, p, population, generations, tolerances)
is used exactly as written.
"""

import dataclasses
import math
import socket
import statistics
import threading
import time

import numpy as np

from cosevo import cmaes, proto
from cosevo.env import EnvConfig, ShooterEnv, StepResult, wrap_frame_skip, wrap_sticky
from cosevo.policy import param_count, unflatten
from cosevo.sparsity import sparsify
from cosevo.trainer import (
    TrainConfig,
    derive_seed,
    deterministic_score,
    robustness_eval,
    run_episode,
    train,
)
from cosevo.transform import Frame, build_basis, dct2_full, dct2_truncated, energy

DESK = EnvConfig(height=84, width=64)


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[acceptance] {name}: {'PASS' if ok else 'FAIL'} ({detail})", flush=True)
    assert ok, f"{name}: {detail}"


# -- transform ----------------------------------------------------------------


def oracle_dct2(pixels: np.ndarray) -> np.ndarray:
    """Brute-force double sum per coefficient, built from scratch."""
    h, w = pixels.shape
    rows = np.array(
        [[math.cos(math.pi / h * (r + 0.5) * k) for r in range(h)] for k in range(h)]
    )
    cols = np.array(
        [[math.cos(math.pi / w * (c + 0.5) * l) for c in range(w)] for l in range(w)]
    )
    out = np.empty((h, w))
    for k in range(h):
        ak = math.sqrt(1.0 / h) if k == 0 else math.sqrt(2.0 / h)
        for l in range(w):
            al = math.sqrt(1.0 / w) if l == 0 else math.sqrt(2.0 / w)
            out[k, l] = ak * al * np.sum(pixels * np.outer(rows[k], cols[l]))
    return out


def test_01_dct_correctness():
    t0 = time.time()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(200):
        h = int(rng.integers(1, 65))
        w = int(rng.integers(1, 65))
        frame = Frame(rng.random((h, w)))
        err = float(np.max(np.abs(dct2_full(frame) - oracle_dct2(frame.pixels))))
        worst = max(worst, err)
    assert worst < 1e-10
    worst_ortho = 0.0
    for n in range(1, 257):
        rows = build_basis(n).rows
        worst_ortho = max(
            worst_ortho, float(np.max(np.abs(rows @ rows.T - np.eye(n))))
        )
    elapsed = time.time() - t0
    report(
        "dct-correctness",
        worst < 1e-10 and worst_ortho < 1e-10 and elapsed < 30,
        f"max oracle err {worst:.2e}, max orthonormality err {worst_ortho:.2e}, "
        f"{elapsed:.1f}s",
    )


def test_02_parseval():
    t0 = time.time()
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(1000):
        h = int(rng.integers(1, 65))
        w = int(rng.integers(1, 65))
        frame = Frame(rng.random((h, w)))
        e_in = energy(frame.pixels)
        e_out = energy(dct2_full(frame))
        worst = max(worst, abs(e_out - e_in) / max(e_in, 1e-300))
    elapsed = time.time() - t0
    report(
        "parseval",
        worst < 1e-9 and elapsed < 10,
        f"max relative energy err {worst:.2e}, {elapsed:.1f}s",
    )


def test_03_truncation_consistency():
    rng = np.random.default_rng(103)
    worst = 0.0
    cases = [(210, 160, 125)] + [
        (int(rng.integers(2, 129)), int(rng.integers(2, 129)), 0) for _ in range(30)
    ]
    for h, w, k in cases:
        if k == 0:
            k = int(rng.integers(1, min(h, w) + 1))
        frame = Frame(rng.random((h, w)))
        block = dct2_truncated(frame, k)
        err = float(np.max(np.abs(block.coeffs - dct2_full(frame)[:k, :k])))
        worst = max(worst, err)
    inputs = 210 * 160
    outputs = 125 * 125
    reduction = 1.0 - outputs / inputs
    ok = (
        worst < 1e-9
        and inputs == 33_600
        and outputs == 15_625
        and round(reduction, 3) == 0.535
    )
    report(
        "truncation-consistency",
        ok,
        f"max crop err {worst:.2e}; {inputs} -> {outputs} inputs "
        f"({reduction:.1%} reduction)",
    )


# -- sparsity -----------------------------------------------------------------


def test_04_sparsification_oracle():
    rng = np.random.default_rng(104)
    percentiles = (0.0, 0.25, 0.9, 0.95, 10.0, 25.0, 50.0, 99.0)
    mismatches = 0
    nesting_violations = 0
    for _ in range(1000):
        k = int(rng.integers(2, 13))
        values = rng.standard_normal((k, k))
        while np.unique(np.abs(values)).size != k * k:
            values = rng.standard_normal((k, k))
        from cosevo.transform import CoeffBlock

        block = CoeffBlock(k=k, coeffs=values, source_height=210, source_width=160)
        masks = {}
        for p in percentiles:
            sparse = sparsify(block, p)
            flat = np.sort(np.abs(values).ravel())
            rank = 1 if p == 0 else math.ceil(p / 100.0 * k * k)
            tau = flat[rank - 1]
            expected_kept = np.abs(values) >= tau
            if not np.array_equal(sparse.mask.kept, expected_kept):
                mismatches += 1
            if sparse.mask.kept_count != int(expected_kept.sum()):
                mismatches += 1
            masks[p] = sparse.mask.kept
        for i, p1 in enumerate(percentiles):
            for p2 in percentiles[i + 1 :]:
                if not np.all(masks[p1] | ~masks[p2]):
                    nesting_violations += 1
    report(
        "sparsification-oracle",
        mismatches == 0 and nesting_violations == 0,
        f"{mismatches} oracle mismatches, {nesting_violations} nesting violations "
        f"over 1000 blocks x {len(percentiles)} percentiles",
    )


# -- policy -------------------------------------------------------------------


def test_05_parameter_counts():
    published = [(50, 350), (75, 525), (125, 875), (125, 875), (150, 1050), (150, 1050)]
    results = [param_count(k, m=1, n=6, include_bias=False) for k, _ in published]
    ok = results == [c for _, c in published]
    report("parameter-counts", ok, f"counts {results}")


# -- optimizer ----------------------------------------------------------------


def _evals_to_target(dim, fitness, target, max_evals, seed, start):
    state = cmaes.init(
        cmaes.CmaConfig(dimension=dim, initial_sigma=0.5, seed=seed,
                        initial_mean=start)
    )
    evals = 0
    while evals < max_evals:
        cands = cmaes.ask(state)
        state = cmaes.tell(state, cands, [fitness(c) for c in cands])
        evals += len(cands)
        if target(state):
            return evals
    return max_evals + 1


def test_06_cma_benchmarks():
    t0 = time.time()

    def sphere(x):
        return -float(np.sum(x * x))

    def rosen(x):
        return -float(
            np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2)
        )

    medians = {}
    for dim in (5, 10):
        counts = [
            _evals_to_target(
                dim, sphere, lambda s: float(np.linalg.norm(s.mean)) < 1e-6,
                20_000, seed, np.full(dim, 1.0),
            )
            for seed in range(10)
        ]
        medians[f"sphere-d{dim}"] = statistics.median(counts)
    counts = [
        _evals_to_target(
            5, rosen, lambda s: -rosen(s.mean) < 1e-6, 100_000, seed, np.zeros(5)
        )
        for seed in range(10)
    ]
    medians["rosenbrock-d5"] = statistics.median(counts)
    elapsed = time.time() - t0
    ok = (
        medians["sphere-d5"] <= 20_000
        and medians["sphere-d10"] <= 20_000
        and medians["rosenbrock-d5"] <= 100_000
        and elapsed < 120
    )
    report("cma-benchmarks", ok, f"median evals {medians}, {elapsed:.1f}s")


def test_07_cma_rank_invariance():
    config = cmaes.CmaConfig(dimension=7, seed=1234)
    fits = [4.0, -2.5, 9.0, 0.0, 3.3, 8.1, -7.0, 1.1, 2.2, 6.6]

    def advance(transform):
        state = cmaes.init(config)
        for round_ in range(3):
            cands = cmaes.ask(state)
            values = [f + round_ for f in fits][: len(cands)]
            state = cmaes.tell(state, cands, [transform(v) for v in values])
        return state

    a = advance(lambda v: v)
    b = advance(lambda v: math.tanh(v / 20.0) * 3.0 + 5.0)  # strictly increasing
    identical = (
        np.array_equal(a.mean, b.mean)
        and a.sigma == b.sigma
        and np.array_equal(a.covariance, b.covariance)
        and np.array_equal(a.path_sigma, b.path_sigma)
        and np.array_equal(a.path_c, b.path_c)
        and a.rng.bit_generator.state == b.rng.bit_generator.state
    )
    report("cma-rank-invariance", identical, "3 updates under monotone transform")


# -- end-to-end ---------------------------------------------------------------


def test_08_end_to_end_determinism():
    t0 = time.time()
    base = TrainConfig(
        k=32, p=25.0, generations=50, env=DESK, parallelism=1, master_seed=3
    )
    serial = train(base)
    parallel = train(dataclasses.replace(base, parallelism=8))
    histories_match = all(
        (a.generation, a.best, a.mean, a.std, a.sigma)
        == (b.generation, b.best, b.mean, b.std, b.sigma)
        for a, b in zip(serial.history, parallel.history)
    ) and len(serial.history) == len(parallel.history) == 50
    from cosevo.policy import flatten

    params_match = np.array_equal(
        flatten(serial.best_params), flatten(parallel.best_params)
    )
    state_match = np.array_equal(
        serial.state.mean, parallel.state.mean
    ) and np.array_equal(serial.state.covariance, parallel.state.covariance)
    elapsed = time.time() - t0
    report(
        "end-to-end-determinism",
        histories_match and params_match and state_match and elapsed < 300,
        f"50 generations, parallelism 1 vs 8, best={serial.best_fitness}, "
        f"{elapsed:.0f}s",
    )


def test_09_learning_signal():
    t0 = time.time()
    dim = param_count(32, 1, 6, False)

    # random-parameter baseline, measured before comparing (the spec's oracle)
    env = wrap_frame_skip(ShooterEnv(DESK), DESK.frame_skip)
    rng = np.random.default_rng(derive_seed(0, "baseline"))
    baseline = []
    for i in range(100):
        params = unflatten(rng.standard_normal(dim) * 0.5, 32, 1, 6)
        baseline.append(
            run_episode(env, params, 32, 25.0, derive_seed(0, "baseline-ep", i))
        )
    baseline_mean = float(np.mean(baseline))

    bests = []
    for seed in range(1, 6):
        result = train(
            TrainConfig(
                k=32, p=25.0, generations=200, env=DESK, parallelism=2,
                master_seed=seed,
            )
        )
        bests.append(result.best_fitness)
        print(f"[acceptance]   seed {seed}: best {result.best_fitness}", flush=True)
    median_best = statistics.median(bests)
    elapsed = time.time() - t0
    report(
        "learning-signal",
        median_best >= 2.0 * baseline_mean and elapsed < 1800,
        f"median best {median_best} vs 2x random mean {2 * baseline_mean:.1f} "
        f"(bests {bests}), {elapsed:.0f}s",
    )


# -- robustness ---------------------------------------------------------------


class _Endless:
    """Minimal non-terminating env for exercising wrappers."""

    height = 4
    width = 4
    action_count = 6

    def reset(self, seed=None):
        return Frame(np.zeros((4, 4)))

    def step(self, action):
        return StepResult(Frame(np.zeros((4, 4))), 0.0, False)


def test_10_robustness_protocol():
    sticky = wrap_sticky(_Endless(), 0.25, seed=55)
    sticky.reset()
    rng = np.random.default_rng(7)
    for _ in range(10_000):
        sticky.step(int(rng.integers(0, 6)))
    fraction = sticky.repeat_count / sticky.decision_count
    within = abs(fraction - 0.25) <= 0.02

    config = TrainConfig(k=8, p=25.0, env=dataclasses.replace(DESK, max_steps=400),
                         master_seed=9)
    params = unflatten(
        np.random.default_rng(1).standard_normal(config.dimension) * 0.5, 8, 1, 6
    )
    det = deterministic_score(params, config)
    stochastic = robustness_eval(params, config, episodes=6, sticky_prob=0.25)
    paired = (
        stochastic.episodes == 6
        and stochastic.best >= stochastic.mean
        and stochastic.top5_mean is not None
        and len(stochastic.scores) == 6
    )
    line = (
        f"Best {det:.0f} / Average {det:.0f} +- 0.0 | "
        f"Best (Sto.) {stochastic.best:.0f} / "
        f"Average +- sigma (Sto.) {stochastic.mean:.1f} +- {stochastic.std:.1f}"
    )
    report(
        "robustness-protocol",
        within and paired,
        f"repeat fraction {fraction:.4f}; paired report [{line}]",
    )


# -- protocol -----------------------------------------------------------------


def test_11_protocol_loopback():
    t0 = time.time()
    action_rng = np.random.default_rng(11)
    mismatches = 0
    for seed in range(10):
        env_config = EnvConfig()  # full 210x160 frames over the wire
        local = wrap_frame_skip(ShooterEnv(env_config), env_config.frame_skip)
        server_sock, client_sock = socket.socketpair()
        served = wrap_frame_skip(ShooterEnv(env_config), env_config.frame_skip)
        thread = threading.Thread(
            target=proto.serve,
            args=(served, server_sock.makefile("rb"), server_sock.makefile("wb")),
            daemon=True,
        )
        thread.start()
        remote = proto.RemoteEnv(
            client_sock.makefile("rb"),
            client_sock.makefile("wb"),
            on_close=client_sock.close,
        )
        frame_l = local.reset(seed)
        frame_r = remote.reset(seed)
        if not np.array_equal(frame_l.pixels, frame_r.pixels):
            mismatches += 1
        for _ in range(60):
            action = int(action_rng.integers(0, 6))
            rl = local.step(action)
            rr = remote.step(action)
            if (
                rl.reward != rr.reward
                or rl.terminated != rr.terminated
                or not np.array_equal(rl.frame.pixels, rr.frame.pixels)
            ):
                mismatches += 1
                break
            if rl.terminated:
                break
        remote.close()
    elapsed = time.time() - t0
    report(
        "protocol-loopback",
        mismatches == 0 and elapsed < 60,
        f"10 seeds bit-exact over the wire, {elapsed:.1f}s",
    )
