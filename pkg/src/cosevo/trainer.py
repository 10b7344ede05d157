"""Generation loop: evaluate sampled policies over full episodes, update the
optimizer, checkpoint, and score robustness after training.

Per-episode seeds derive from (master_seed, generation, candidate index) with
a keyed 64-bit hash, so results are independent of evaluation order and any
parallelism degree; candidate evaluations within a generation may run
concurrently, each owning one environment instance.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import queue
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import cmaes
from .env import EnvConfig, GameRules, ShooterEnv, wrap_frame_skip, wrap_sticky
from .errors import CheckpointError, ConfigError, EvaluationError
from .policy import PolicyParams, forward, param_count, select_action, unflatten
from .proto import connect_child, connect_tcp
from .sparsity import sparsify
from .transform import dct2_truncated

CHECKPOINT_FORMAT = "cosevo-checkpoint"
CHECKPOINT_VERSION = 1
HISTORY_COLUMNS = ("generation", "best", "mean", "std", "sigma", "wall_ms")


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a mixed tuple of ints, floats, and strings.

    Every part is tagged and length-prefixed so distinct tuples never share
    a hash input, regardless of the bytes inside each part.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, str):
            payload = part.encode()
            tag = b"s"
        elif isinstance(part, (bool, np.bool_)):
            payload = bytes([int(part)])
            tag = b"b"
        elif isinstance(part, (int, np.integer)):
            v = int(part)
            width = (v.bit_length() + 8) // 8 + 1  # room for the sign bit
            payload = v.to_bytes(width, "little", signed=True)
            tag = b"i"
        elif isinstance(part, (float, np.floating)):
            payload = struct.pack("<d", float(part))
            tag = b"f"
        else:
            raise TypeError(f"cannot derive a seed from {type(part)}")
        h.update(tag + struct.pack("<I", len(payload)) + payload)
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class TrainConfig:
    """Full training setup; the optimizer dimension follows from (k, m, n, bias)."""

    k: int = 32
    p: float = 25.0
    generations: int = 50
    env: EnvConfig = field(default_factory=EnvConfig)
    m: int = 1
    n: int = 6
    include_bias: bool = False
    sigma0: float = 0.5
    population: int | None = None
    parallelism: int = 1
    checkpoint_every: int = 10
    master_seed: int = 0

    def __post_init__(self) -> None:
        if not 1 <= self.k < min(self.env.height, self.env.width):
            raise ConfigError(
                f"k={self.k} must satisfy 1 <= k < {min(self.env.height, self.env.width)}"
            )
        if not 0.0 <= self.p < 100.0:
            raise ConfigError(f"p={self.p} must lie in [0, 100)")
        if self.generations < 0:
            raise ConfigError("generations must be >= 0")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")

    @property
    def dimension(self) -> int:
        return param_count(self.k, self.m, self.n, self.include_bias)

    def cma_config(self) -> cmaes.CmaConfig:
        return cmaes.CmaConfig(
            dimension=self.dimension,
            initial_sigma=self.sigma0,
            population=self.population,
            seed=derive_seed(self.master_seed, "cma"),
        )


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best: float
    mean: float
    std: float
    sigma: float
    wall_ms: float


@dataclass(frozen=True)
class EvalReport:
    """Episode score statistics; std is the population standard deviation."""

    episodes: int
    scores: list[float]
    mean: float
    std: float
    best: float
    top5_mean: float | None


@dataclass
class TrainResult:
    best_params: PolicyParams
    best_fitness: float | None
    history: list[GenerationRecord]
    state: cmaes.CmaState


def make_report(scores: list[float]) -> EvalReport:
    if not scores:
        raise ConfigError("cannot build a report from zero episodes")
    arr = np.asarray(scores, dtype=np.float64)
    top5 = float(np.mean(np.sort(arr)[-5:])) if arr.size >= 5 else None
    return EvalReport(
        episodes=len(scores),
        scores=[float(s) for s in scores],
        mean=float(arr.mean()),
        std=float(arr.std()),
        best=float(arr.max()),
        top5_mean=top5,
    )


# -- environment sources -----------------------------------------------------


class EnvSource:
    """Factory for evaluator-owned environment instances.

    The builtin source wraps the game with the configured frame skip; remote
    sources assume the serving side already applied it.
    """

    def __init__(self, env_config: EnvConfig, address: str = "builtin"):
        self.env_config = env_config
        self.address = address

    def make(self):
        if self.address == "builtin":
            return wrap_frame_skip(ShooterEnv(self.env_config), self.env_config.frame_skip)
        if self.address.startswith("proto:cmd:"):
            return connect_child(self.address[len("proto:cmd:") :].split())
        if self.address.startswith("proto:"):
            host, _, port = self.address[len("proto:") :].rpartition(":")
            if not host or not port.isdigit():
                raise ConfigError(f"bad environment address {self.address!r}")
            return connect_tcp(host, int(port))
        raise ConfigError(f"unknown environment address {self.address!r}")

    @staticmethod
    def close(env) -> None:
        closer = getattr(env, "close", None)
        if closer:
            closer()


class _EnvPool:
    """Fixed-size pool of reusable environments for the worker threads."""

    def __init__(self, source: EnvSource, size: int):
        self._q: queue.Queue = queue.Queue()
        self._all = []
        for _ in range(size):
            env = source.make()
            self._all.append(env)
            self._q.put(env)

    def get(self):
        return self._q.get()

    def put(self, env) -> None:
        self._q.put(env)

    def close(self) -> None:
        for env in self._all:
            EnvSource.close(env)


# -- episode evaluation --------------------------------------------------------


def run_episode(env, params: PolicyParams, k: int, p: float, seed: int) -> float:
    """One full episode on an already-wrapped environment; returns the score."""
    frame = env.reset(seed)
    total = 0.0
    while True:
        block = dct2_truncated(frame, k)
        logits = forward(params, sparsify(block, p))
        if not np.all(np.isfinite(logits.values)):
            raise EvaluationError("policy produced non-finite logits")
        result = env.step(select_action(logits))
        total += result.reward
        if result.terminated:
            return total
        frame = result.frame


def evaluate_policy(
    params: PolicyParams,
    env_config: EnvConfig,
    k: int,
    p: float,
    episode_seed: int,
    sticky_seed: int = 0,
) -> float:
    """Score one episode on a fresh builtin environment built from env_config."""
    env = wrap_frame_skip(ShooterEnv(env_config), env_config.frame_skip)
    if env_config.sticky_prob > 0.0:
        env = wrap_sticky(env, env_config.sticky_prob, sticky_seed)
    return run_episode(env, params, k, p, episode_seed)


def _episode_env(config: TrainConfig, base_env, generation: int, index: int):
    if config.env.sticky_prob > 0.0:
        return wrap_sticky(
            base_env,
            config.env.sticky_prob,
            derive_seed(config.master_seed, "sticky", generation, index),
        )
    return base_env


def run_generation(
    state: cmaes.CmaState,
    config: TrainConfig,
    pool: _EnvPool | None = None,
    executor: ThreadPoolExecutor | None = None,
    env_source: EnvSource | None = None,
) -> tuple[cmaes.CmaState, GenerationRecord, np.ndarray, float]:
    """One ask/evaluate/tell cycle.

    Returns (successor state, record, best candidate vector, best fitness).
    Any evaluation failure aborts the generation with candidate context.
    """
    t0 = time.perf_counter()
    gen = state.generation
    candidates = cmaes.ask(state)

    own_pool = pool is None
    if own_pool:
        source = env_source or EnvSource(config.env)
        pool = _EnvPool(source, config.parallelism)
    own_executor = executor is None
    if own_executor:
        executor = ThreadPoolExecutor(max_workers=config.parallelism)

    def evaluate(index: int) -> float:
        env = pool.get()
        try:
            params = unflatten(
                candidates[index], config.k, config.m, config.n, config.include_bias
            )
            seed = derive_seed(config.master_seed, "episode", gen, index)
            return run_episode(
                _episode_env(config, env, gen, index), params, config.k, config.p, seed
            )
        finally:
            pool.put(env)

    try:
        futures = [executor.submit(evaluate, i) for i in range(len(candidates))]
        fitnesses: list[float] = []
        for i, fut in enumerate(futures):
            try:
                fitnesses.append(fut.result())
            except Exception as exc:
                raise EvaluationError(
                    f"candidate {i} of generation {gen} failed: {exc}"
                ) from exc
    finally:
        if own_executor:
            executor.shutdown(wait=True)
        if own_pool:
            pool.close()

    new_state = cmaes.tell(state, candidates, fitnesses)
    arr = np.asarray(fitnesses)
    best_index = int(np.argmax(arr))
    record = GenerationRecord(
        generation=gen,
        best=float(arr.max()),
        mean=float(arr.mean()),
        std=float(arr.std()),
        sigma=state.sigma,
        wall_ms=(time.perf_counter() - t0) * 1000.0,
    )
    return new_state, record, candidates[best_index].copy(), float(arr[best_index])


# -- config and checkpoint serialization ---------------------------------------


def config_to_dict(config: TrainConfig) -> dict:
    # json round trip normalizes tuples to lists, matching reloaded documents
    return json.loads(json.dumps(dataclasses.asdict(config)))


def config_from_dict(data: dict) -> TrainConfig:
    data = dict(data)
    env = dict(data.get("env", {}))
    rules = env.pop("rules", None)
    if rules is not None:
        rules = dict(rules)
        if "row_points" in rules:
            rules["row_points"] = tuple(rules["row_points"])
        env["rules"] = GameRules(**rules)
    data["env"] = EnvConfig(**env)
    return TrainConfig(**data)


def _history_to_lists(history: list[GenerationRecord]) -> list[list]:
    return [
        [r.generation, r.best, r.mean, r.std, r.sigma, r.wall_ms] for r in history
    ]


def _history_from_lists(rows: list[list]) -> list[GenerationRecord]:
    return [
        GenerationRecord(
            generation=int(g), best=b, mean=m, std=s, sigma=sg, wall_ms=w
        )
        for g, b, m, s, sg, w in rows
    ]


def save_checkpoint(
    path: str,
    config: TrainConfig,
    state: cmaes.CmaState,
    best_vector: np.ndarray | None,
    best_fitness: float | None,
    history: list[GenerationRecord],
) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config_to_dict(config),
        "cma": cmaes.state_to_dict(state),
        "best_vector": None if best_vector is None else best_vector.tolist(),
        "best_fitness": best_fitness,
        "history": _history_to_lists(history),
    }
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path} is not a version-{CHECKPOINT_VERSION} checkpoint")
    return doc


def export_history_csv(history: list[GenerationRecord], path: str) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(HISTORY_COLUMNS) + "\n")
        for r in history:
            fh.write(
                f"{r.generation},{r.best!r},{r.mean!r},{r.std!r},"
                f"{r.sigma!r},{r.wall_ms!r}\n"
            )


# -- training ----------------------------------------------------------------


def train(
    config: TrainConfig,
    out_dir: str | None = None,
    resume: str | None = None,
    env_source: EnvSource | None = None,
) -> TrainResult:
    """Run the generation loop to the budget, tracking the best-ever candidate
    by training fitness. Checkpoints land in out_dir every checkpoint_every
    generations; resuming from one continues bit-identically."""
    source = env_source or EnvSource(config.env)

    if resume is not None:
        doc = load_checkpoint(resume)
        # the generation budget may be extended on resume; all else must match
        stored = {k: v for k, v in doc["config"].items() if k != "generations"}
        current = {k: v for k, v in config_to_dict(config).items() if k != "generations"}
        if stored != current:
            raise ConfigError("checkpoint was written with a different config")
        state = cmaes.state_from_dict(doc["cma"])
        best_vector = (
            None
            if doc["best_vector"] is None
            else np.asarray(doc["best_vector"], dtype=np.float64)
        )
        best_fitness = doc["best_fitness"]
        history = _history_from_lists(doc["history"])
    else:
        state = cmaes.init(config.cma_config())
        best_vector = None
        best_fitness = None
        history = []

    checkpoint_path = os.path.join(out_dir, "checkpoint.json") if out_dir else None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    pool = _EnvPool(source, config.parallelism)
    executor = ThreadPoolExecutor(max_workers=config.parallelism)
    try:
        while True:
            stop, _reason = cmaes.should_stop(state, config.generations)
            if stop:
                break
            state, record, gen_best_vec, gen_best_fit = run_generation(
                state, config, pool=pool, executor=executor
            )
            history.append(record)
            if best_fitness is None or gen_best_fit > best_fitness:
                best_fitness = gen_best_fit
                best_vector = gen_best_vec
            if checkpoint_path and (
                state.generation % config.checkpoint_every == 0
                or state.generation >= config.generations
            ):
                save_checkpoint(
                    checkpoint_path, config, state, best_vector, best_fitness, history
                )
    finally:
        executor.shutdown(wait=True)
        pool.close()

    if checkpoint_path:
        save_checkpoint(checkpoint_path, config, state, best_vector, best_fitness, history)

    vector = best_vector if best_vector is not None else state.mean
    best_params = unflatten(vector, config.k, config.m, config.n, config.include_bias)
    return TrainResult(
        best_params=best_params,
        best_fitness=best_fitness,
        history=history,
        state=state,
    )


# -- post-training evaluation ---------------------------------------------------


def deterministic_score(
    params: PolicyParams, config: TrainConfig, env_source: EnvSource | None = None
) -> float:
    """Score of one episode with no action perturbation."""
    source = env_source or EnvSource(config.env)
    env = source.make()
    try:
        return run_episode(env, params, config.k, config.p, config.env.seed)
    finally:
        EnvSource.close(env)


def robustness_eval(
    params: PolicyParams,
    config: TrainConfig,
    episodes: int,
    sticky_prob: float = 0.25,
    env_source: EnvSource | None = None,
) -> EvalReport:
    """Re-evaluate a trained policy under sticky actions (default prob 0.25).

    The world seed stays fixed; only the sticky generators differ across
    episodes, so the report isolates sensitivity to action perturbation.
    """
    if episodes < 1:
        raise ConfigError(f"episodes must be >= 1, got {episodes}")
    source = env_source or EnvSource(config.env)
    scores = []
    for e in range(episodes):
        env = source.make()
        try:
            sticky = wrap_sticky(
                env, sticky_prob, derive_seed(config.master_seed, "sticky-eval", e)
            )
            scores.append(
                run_episode(sticky, params, config.k, config.p, config.env.seed)
            )
        finally:
            EnvSource.close(env)
    return make_report(scores)
