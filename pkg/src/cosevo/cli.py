"""Command-line entry point.

Subcommands: train, eval, robust, sweep, inspect, serve-env. Every run echoes
its fully resolved configuration (JSON) so outputs can be reproduced exactly.
Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import socket
import sys
import threading

import numpy as np

from . import proto, sweep as sweep_mod, trainer
from .env import EnvConfig, ShooterEnv, wrap_frame_skip
from .errors import CheckpointError, ConfigError, CosevoError, ShapeError
from .pgm import read_pgm
from .policy import PolicyParams, flatten, unflatten
from .sparsity import sparsify
from .transform import dct2_full, dct2_truncated, energy

PARAMS_FORMAT = "cosevo-params"


def _echo_config(config: trainer.TrainConfig) -> None:
    print("resolved config:")
    print(json.dumps(trainer.config_to_dict(config), indent=2, sort_keys=True))
    print(f"master seed: {config.master_seed}")
    print(f"policy dimension: {config.dimension}")


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _load_train_config(args) -> trainer.TrainConfig:
    data: dict = {}
    if getattr(args, "config", None):
        data = _read_json(args.config)
    overrides = {
        "k": args.k,
        "p": args.p,
        "generations": args.generations,
        "master_seed": args.seed,
        "parallelism": args.parallelism,
        "population": args.population,
    }
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    env = data.get("env", {})
    if args.max_steps is not None:
        env = {**env, "max_steps": args.max_steps}
    if env:
        data["env"] = env
    return trainer.config_from_dict(data)


def save_params(path: str, params: PolicyParams, config: trainer.TrainConfig) -> None:
    doc = {
        "format": PARAMS_FORMAT,
        "k": params.k,
        "m": params.m,
        "n": params.n,
        "include_bias": params.bias is not None,
        "vector": flatten(params).tolist(),
        "config": trainer.config_to_dict(config),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_params(path: str) -> tuple[PolicyParams, trainer.TrainConfig]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format") != PARAMS_FORMAT:
            raise ConfigError(f"{path} is not a parameter file")
        params = unflatten(
            np.asarray(doc["vector"], dtype=np.float64),
            doc["k"],
            doc["m"],
            doc["n"],
            doc["include_bias"],
        )
        config = trainer.config_from_dict(doc["config"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot load parameters from {path}: {exc}") from exc
    return params, config


def cmd_train(args) -> int:
    config = _load_train_config(args)
    _echo_config(config)
    source = trainer.EnvSource(config.env, args.env)
    os.makedirs(args.out, exist_ok=True)
    result = trainer.train(
        config, out_dir=args.out, resume=args.resume, env_source=source
    )
    trainer.export_history_csv(result.history, os.path.join(args.out, "history.csv"))
    save_params(os.path.join(args.out, "best_params.json"), result.best_params, config)
    print(f"generations completed: {result.state.generation}")
    print(f"best training fitness: {result.best_fitness}")
    return 0


def _print_report(label: str, report: trainer.EvalReport) -> None:
    top5 = "n/a" if report.top5_mean is None else f"{report.top5_mean:.1f}"
    print(
        f"{label}: episodes={report.episodes} mean={report.mean:.1f} "
        f"std={report.std:.1f} best={report.best:.1f} top5_mean={top5}"
    )
    print(
        f"csv,{label},{report.episodes},{report.mean!r},{report.std!r},"
        f"{report.best!r},{'' if report.top5_mean is None else repr(report.top5_mean)}"
    )


def cmd_eval(args) -> int:
    if args.episodes < 1:
        raise ConfigError("--episodes must be >= 1")
    params, config = load_params(args.params)
    if args.seed is not None:
        config = dataclasses.replace(
            config, env=dataclasses.replace(config.env, seed=args.seed)
        )
    _echo_config(config)
    source = trainer.EnvSource(config.env, args.env)
    report = trainer.robustness_eval(
        params, config, args.episodes, sticky_prob=args.sticky, env_source=source
    )
    _print_report(f"eval(sticky={args.sticky})", report)
    return 0


def cmd_robust(args) -> int:
    if args.episodes < 1:
        raise ConfigError("--episodes must be >= 1")
    params, config = load_params(args.params)
    _echo_config(config)
    source = trainer.EnvSource(config.env, args.env)
    det = trainer.deterministic_score(params, config, env_source=source)
    print(f"deterministic: score={det:.1f}")
    report = trainer.robustness_eval(
        params, config, args.episodes, sticky_prob=0.25, env_source=source
    )
    _print_report("stochastic(sticky=0.25)", report)
    return 0


def _write_matrix_csv(path: str, matrix: np.ndarray) -> None:
    with open(path, "w") as fh:
        for row in np.atleast_2d(matrix):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def cmd_inspect(args) -> int:
    if (args.frame is None) == (args.env_step is None):
        raise ConfigError("give exactly one of --frame or --env-step")
    if args.frame is not None:
        try:
            frame = read_pgm(args.frame)
        except (OSError, ShapeError) as exc:
            raise ConfigError(f"cannot read frame {args.frame}: {exc}") from exc
    else:
        env = ShooterEnv(EnvConfig(seed=args.seed or 0))
        frame = env.reset()
        for _ in range(args.env_step):
            result = env.step(0)
            frame = result.frame
            if result.terminated:
                break
    os.makedirs(args.out, exist_ok=True)
    full = dct2_full(frame)
    block = dct2_truncated(frame, args.k)
    sparse = sparsify(block, args.p)
    _write_matrix_csv(os.path.join(args.out, "coeffs_full.csv"), full)
    _write_matrix_csv(os.path.join(args.out, "coeffs_truncated.csv"), block.coeffs)
    _write_matrix_csv(os.path.join(args.out, "coeffs_sparse.csv"), sparse.block.coeffs)
    _write_matrix_csv(
        os.path.join(args.out, "support_mask.csv"),
        sparse.mask.kept.astype(np.float64),
    )
    total = energy(frame.pixels)
    truncated = energy(block.coeffs)
    retained = energy(sparse.block.coeffs)
    with open(os.path.join(args.out, "energy.csv"), "w") as fh:
        fh.write("metric,value\n")
        fh.write(f"frame_energy,{total!r}\n")
        fh.write(f"truncated_energy,{truncated!r}\n")
        fh.write(f"sparse_energy,{retained!r}\n")
        fh.write(f"truncated_fraction,{(truncated / total if total else 0.0)!r}\n")
        fh.write(f"retained_fraction,{(retained / truncated if truncated else 0.0)!r}\n")
        fh.write(f"kept_count,{sparse.mask.kept_count}\n")
        fh.write(f"threshold,{sparse.threshold!r}\n")
    print(f"wrote inspection artifacts to {args.out}")
    return 0


def cmd_sweep(args) -> int:
    grid_data: dict = {}
    if args.grid:
        grid_data = _read_json(args.grid)
    base_data = grid_data.pop("base", {})
    try:
        grid = sweep_mod.SweepGrid(
            **{
                **grid_data,
                **{
                    k: tuple(v)
                    for k, v in grid_data.items()
                    if k in ("k_values", "p_values")
                },
            }
        )
        base = trainer.config_from_dict(base_data)
    except TypeError as exc:
        raise ConfigError(f"malformed grid file: {exc}") from exc
    print("resolved grid:")
    print(json.dumps(dataclasses.asdict(grid), indent=2, sort_keys=True))
    _echo_config(base)
    os.makedirs(args.out, exist_ok=True)
    source = trainer.EnvSource(base.env, args.env)

    def progress(k, p, trial, score):
        print(f"cell k={k} p={p} trial={trial}: best={score}", flush=True)

    cells = sweep_mod.run_sweep(
        grid, base, out_dir=args.out, env_source=source, progress=progress
    )
    sweep_mod.export_heatmap(cells, os.path.join(args.out, "heatmap.csv"))
    print(f"wrote {len(cells)} cells to {args.out}")
    return 0


def cmd_serve_env(args) -> int:
    env_config = EnvConfig(
        seed=args.seed or 0,
        height=args.height,
        width=args.width,
        max_steps=args.max_steps,
    )

    def make_env():
        return wrap_frame_skip(ShooterEnv(env_config), env_config.frame_skip)

    if args.stdio:
        proto.serve(make_env(), sys.stdin.buffer, sys.stdout.buffer)
        return 0
    host, _, port = args.listen.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"bad listen address {args.listen!r}, expected HOST:PORT")
    server = socket.create_server((host, int(port)))
    print(f"serving builtin environment on {host}:{port}", flush=True)

    def handle(conn):
        with conn:
            reader = conn.makefile("rb")
            writer = conn.makefile("wb")
            try:
                proto.serve(make_env(), reader, writer)
            except CosevoError:
                pass

    try:
        while True:
            conn, _addr = server.accept()
            threading.Thread(target=handle, args=(conn,), daemon=True).start()
    except KeyboardInterrupt:
        return 0
    finally:
        server.close()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cosevo",
        description="Evolve sparse cosine-feature policies on grayscale games.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the generation loop")
    p_train.add_argument("--config", help="JSON config file (flags override)")
    p_train.add_argument("--k", type=int)
    p_train.add_argument("--p", type=float)
    p_train.add_argument("--generations", type=int)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--parallelism", type=int)
    p_train.add_argument("--population", type=int)
    p_train.add_argument("--max-steps", type=int)
    p_train.add_argument("--env", default="builtin", help="builtin | proto:HOST:PORT | proto:cmd:CMD")
    p_train.add_argument("--resume", help="checkpoint file to continue from")
    p_train.add_argument("--out", required=True)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a trained policy")
    p_eval.add_argument("--params", required=True)
    p_eval.add_argument("--episodes", type=int, default=10)
    p_eval.add_argument("--sticky", type=float, default=0.0)
    p_eval.add_argument("--seed", type=int)
    p_eval.add_argument("--env", default="builtin")
    p_eval.set_defaults(func=cmd_eval)

    p_rob = sub.add_parser("robust", help="paired deterministic/sticky evaluation")
    p_rob.add_argument("--params", required=True)
    p_rob.add_argument("--episodes", type=int, default=30)
    p_rob.add_argument("--env", default="builtin")
    p_rob.set_defaults(func=cmd_robust)

    p_ins = sub.add_parser("inspect", help="dump pipeline stages for one frame")
    p_ins.add_argument("--frame", help="binary PGM (P5) file")
    p_ins.add_argument("--env-step", type=int, help="builtin-game tick to inspect")
    p_ins.add_argument("--seed", type=int)
    p_ins.add_argument("--k", type=int, required=True)
    p_ins.add_argument("--p", type=float, required=True)
    p_ins.add_argument("--out", required=True)
    p_ins.set_defaults(func=cmd_inspect)

    p_sweep = sub.add_parser("sweep", help="grid sweep over (k, p)")
    p_sweep.add_argument("--grid", help="JSON grid file; may embed a base config")
    p_sweep.add_argument("--env", default="builtin")
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(func=cmd_sweep)

    p_serve = sub.add_parser("serve-env", help="serve the builtin game over the wire protocol")
    group = p_serve.add_mutually_exclusive_group(required=True)
    group.add_argument("--stdio", action="store_true")
    group.add_argument("--listen", help="HOST:PORT")
    p_serve.add_argument("--seed", type=int)
    p_serve.add_argument("--height", type=int, default=210)
    p_serve.add_argument("--width", type=int, default=160)
    p_serve.add_argument("--max-steps", type=int, default=10_000)
    p_serve.set_defaults(func=cmd_serve_env)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CosevoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
