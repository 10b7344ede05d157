"""Serve one emulator instance over standard streams, SCP1 wire protocol.

Wire layout (little-endian throughout, no padding):

    handshake (sent once):  "SCP1" | height u16 | width u16 | action_count u8
    requests:               0x01 + seed u64 (reset) | 0x02 + action u8 (step)
                            | 0x03 (close)
    response per request:   reward f64 | status u8 | frame u8[height * width]

Status: 0 running, 1 terminated, 0xFF error (zero frame payload). Lifecycle
violations and bad actions earn an error response; an unknown opcode earns an
error response and closes the connection. Frames are raw 8-bit grayscale,
row-major. Sticky actions are NOT applied here: the training side owns the
action-repeat rule, and the emulator always runs with repeat probability 0.
Rewards are forwarded raw, with no clipping.
"""

from __future__ import annotations

import argparse
import struct
import sys
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

MAGIC = b"SCP1"
OP_RESET = 0x01
OP_STEP = 0x02
OP_CLOSE = 0x03
STATUS_RUNNING = 0
STATUS_TERMINATED = 1
STATUS_ERROR = 0xFF

_HANDSHAKE = struct.Struct("<4sHHB")
_RESP_HEAD = struct.Struct("<dB")
_SEED = struct.Struct("<Q")

DEFAULT_GAME = "ALE/SpaceInvaders-v5"


@dataclass(frozen=True)
class BridgeConfig:
    game: str = DEFAULT_GAME
    frame_skip: int = 4
    repeat_action_probability: float = 0.0
    max_episode_steps: int = 10_000
    backend: str = "ale"  # "ale" or "fake" (deterministic test emulator)


class AleEmulator:
    """Real emulator reached through gymnasium's ALE bindings.

    Grayscale observations only; frame skip and action-repeat settings are
    passed straight to the environment.
    """

    def __init__(self, config: BridgeConfig):
        try:
            import gymnasium
        except ImportError as exc:  # pragma: no cover - depends on host setup
            raise RuntimeError(
                "gymnasium with ale-py is not installed; "
                "install the [ale] extra or use --backend fake"
            ) from exc
        self._env = gymnasium.make(
            config.game,
            obs_type="grayscale",
            frameskip=config.frame_skip,
            repeat_action_probability=config.repeat_action_probability,
            max_episode_steps=config.max_episode_steps,
        )
        obs, _ = self._env.reset(seed=0)
        self.height, self.width = obs.shape
        self.action_count = int(self._env.action_space.n)

    def reset(self, seed: int) -> np.ndarray:
        obs, _ = self._env.reset(seed=seed)
        return np.asarray(obs, dtype=np.uint8)

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        obs, reward, terminated, truncated, _ = self._env.step(action)
        return np.asarray(obs, dtype=np.uint8), float(reward), terminated or truncated

    def close(self) -> None:
        self._env.close()


class FakeEmulator:
    """Deterministic stand-in emulator for wire-level testing.

    Emits 210x160 frames whose content depends on (seed, step); reward equals
    the action index and episodes end after a fixed number of steps.
    """

    EPISODE_LEN = 25

    def __init__(self, config: BridgeConfig):
        self.height, self.width = 210, 160
        self.action_count = 6
        self._seed = 0
        self._t = 0

    def _frame(self) -> np.ndarray:
        base = (self._seed * 31 + self._t * 7) % 251
        row = (np.arange(self.width, dtype=np.uint32) + base) % 256
        return ((row[None, :] + np.arange(self.height, dtype=np.uint32)[:, None]) % 256
                ).astype(np.uint8)

    def reset(self, seed: int) -> np.ndarray:
        self._seed = seed
        self._t = 0
        return self._frame()

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        self._t += 1
        return self._frame(), float(action), self._t >= self.EPISODE_LEN

    def close(self) -> None:
        pass


def _read_exact(stream: BinaryIO, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def serve_bridge(config: BridgeConfig, reader: BinaryIO, writer: BinaryIO) -> int:
    """Handle one connection until a close opcode or EOF. Returns an exit code."""
    try:
        if config.backend == "fake":
            emulator = FakeEmulator(config)
        else:
            emulator = AleEmulator(config)
    except Exception as exc:
        print(f"ale-bridge: cannot start emulator: {exc}", file=sys.stderr)
        return 1

    writer.write(
        _HANDSHAKE.pack(MAGIC, emulator.height, emulator.width, emulator.action_count)
    )
    writer.flush()
    zero_frame = bytes(emulator.height * emulator.width)
    started = False
    terminated = False

    def respond(reward: float, status: int, payload: bytes) -> None:
        writer.write(_RESP_HEAD.pack(reward, status) + payload)
        writer.flush()

    try:
        while True:
            op = _read_exact(reader, 1)
            if op is None or op[0] == OP_CLOSE:
                return 0
            if op[0] == OP_RESET:
                raw = _read_exact(reader, _SEED.size)
                if raw is None:
                    return 0
                frame = emulator.reset(_SEED.unpack(raw)[0])
                started, terminated = True, False
                respond(0.0, STATUS_RUNNING, frame.tobytes())
            elif op[0] == OP_STEP:
                raw = _read_exact(reader, 1)
                if raw is None:
                    return 0
                action = raw[0]
                if not started or terminated or action >= emulator.action_count:
                    respond(0.0, STATUS_ERROR, zero_frame)
                    continue
                frame, reward, terminated = emulator.step(action)
                respond(
                    reward,
                    STATUS_TERMINATED if terminated else STATUS_RUNNING,
                    frame.tobytes(),
                )
            else:
                respond(0.0, STATUS_ERROR, zero_frame)
                return 0
    finally:
        emulator.close()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ale-bridge",
        description="Serve an Atari game over the SCP1 protocol on stdio.",
    )
    parser.add_argument("--game", default=DEFAULT_GAME)
    parser.add_argument("--frame-skip", type=int, default=4)
    parser.add_argument("--repeat-action-probability", type=float, default=0.0)
    parser.add_argument("--max-episode-steps", type=int, default=10_000)
    parser.add_argument(
        "--backend", choices=("ale", "fake"), default="ale",
        help="'fake' runs the deterministic test emulator",
    )
    args = parser.parse_args(argv)
    config = BridgeConfig(
        game=args.game,
        frame_skip=args.frame_skip,
        repeat_action_probability=args.repeat_action_probability,
        max_episode_steps=args.max_episode_steps,
        backend=args.backend,
    )
    return serve_bridge(config, sys.stdin.buffer, sys.stdout.buffer)


if __name__ == "__main__":
    sys.exit(main())
