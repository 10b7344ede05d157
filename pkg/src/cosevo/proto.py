"""Binary wire protocol for serving episodes from an external process.

Layout (all multi-byte integers little-endian, no padding):

    handshake (server -> client, once):
        magic "SCP1" | height u16 | width u16 | action_count u8
    requests (client -> server):
        0x01 | seed u64          reset
        0x02 | action u8         step
        0x03                     close
    response (server -> client, one per reset/step):
        reward f64 | status u8 | frame bytes (height * width, row-major u8)

Status 0 means running, 1 terminated, 0xFF an in-band protocol error (the
frame payload is zeros). Frames travel as 8-bit grayscale and are divided
by 255 on the client, which reproduces in-process pixel values bit-exactly.
The magic string versions the protocol; an incompatible revision would ship
as "SCP2".
"""

from __future__ import annotations

import socket
import struct
import subprocess
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .errors import ProtocolError, TransportError
from .env import StepResult
from .transform import Frame, frame_from_u8

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


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            raise TransportError(f"stream ended after {len(buf)} of {n} bytes")
        buf += chunk
    return buf


@dataclass(frozen=True)
class Handshake:
    height: int
    width: int
    action_count: int


def read_handshake(reader: BinaryIO) -> Handshake:
    raw = _read_exact(reader, _HANDSHAKE.size)
    magic, height, width, action_count = _HANDSHAKE.unpack(raw)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if height < 1 or width < 1:
        raise ProtocolError(f"unusable frame dimensions {height}x{width}")
    if action_count < 1:
        raise ProtocolError("action_count must be >= 1")
    return Handshake(height=height, width=width, action_count=action_count)


def write_handshake(writer: BinaryIO, height: int, width: int, action_count: int) -> None:
    if not (1 <= height <= 0xFFFF and 1 <= width <= 0xFFFF):
        raise ProtocolError(f"dimensions {height}x{width} overflow the wire format")
    if not 1 <= action_count <= 0xFF:
        raise ProtocolError(f"action_count {action_count} overflows the wire format")
    writer.write(_HANDSHAKE.pack(MAGIC, height, width, action_count))
    writer.flush()


class RemoteEnv:
    """Client half: drives a served environment through reset/step like a
    local one. Not safe for concurrent requests on a single connection."""

    def __init__(self, reader: BinaryIO, writer: BinaryIO, on_close=None):
        self._reader = reader
        self._writer = writer
        self._on_close = on_close
        self._dead = False
        hs = read_handshake(reader)
        self.height = hs.height
        self.width = hs.width
        self.action_count = hs.action_count

    def _read_response(self) -> tuple[float, int, np.ndarray]:
        try:
            head = _read_exact(self._reader, _RESP_HEAD.size)
            reward, status = _RESP_HEAD.unpack(head)
            payload = _read_exact(self._reader, self.height * self.width)
        except TransportError:
            self._dead = True
            raise
        frame = np.frombuffer(payload, dtype=np.uint8).reshape(self.height, self.width)
        return reward, status, frame

    def _request(self, message: bytes) -> tuple[float, int, np.ndarray]:
        if self._dead:
            raise TransportError("connection is no longer usable")
        try:
            self._writer.write(message)
            self._writer.flush()
        except (OSError, ValueError) as exc:
            self._dead = True
            raise TransportError(f"write failed: {exc}") from exc
        reward, status, frame = self._read_response()
        if status == STATUS_ERROR:
            raise ProtocolError("server reported a protocol error")
        if status not in (STATUS_RUNNING, STATUS_TERMINATED):
            self._dead = True
            raise ProtocolError(f"unknown response status {status:#x}")
        return reward, status, frame

    def reset(self, seed: int | None = None) -> Frame:
        _, _, frame = self._request(
            bytes([OP_RESET]) + _SEED.pack(0 if seed is None else seed)
        )
        return frame_from_u8(frame)

    def step(self, action: int) -> StepResult:
        reward, status, frame = self._request(bytes([OP_STEP, action]))
        return StepResult(
            frame=frame_from_u8(frame),
            reward=reward,
            terminated=status == STATUS_TERMINATED,
        )

    def close(self) -> None:
        if not self._dead:
            try:
                self._writer.write(bytes([OP_CLOSE]))
                self._writer.flush()
            except (OSError, ValueError):
                pass
            self._dead = True
        if self._on_close is not None:
            self._on_close()
            self._on_close = None


def connect(reader: BinaryIO, writer: BinaryIO) -> RemoteEnv:
    """Complete the handshake over an open byte stream pair."""
    return RemoteEnv(reader, writer)


def _frame_to_u8(frame: Frame) -> bytes:
    return np.rint(frame.pixels * 255.0).astype(np.uint8).tobytes()


def serve(env, reader: BinaryIO, writer: BinaryIO) -> None:
    """Answer protocol requests with `env` until a close opcode or EOF.

    Lifecycle violations (step before reset or after termination) and
    out-of-range actions earn an in-band error response; a malformed opcode
    earns an error response followed by connection close.
    """
    height, width = env.height, env.width
    write_handshake(writer, height, width, env.action_count)
    zero_frame = bytes(height * width)
    started = False
    terminated = False

    def respond(reward: float, status: int, payload: bytes) -> None:
        writer.write(_RESP_HEAD.pack(reward, status) + payload)
        writer.flush()

    while True:
        try:
            op = _read_exact(reader, 1)[0]
        except TransportError:
            return  # peer vanished; treat as close
        if op == OP_CLOSE:
            return
        if op == OP_RESET:
            seed = _SEED.unpack(_read_exact(reader, _SEED.size))[0]
            frame = env.reset(seed)
            started, terminated = True, False
            respond(0.0, STATUS_RUNNING, _frame_to_u8(frame))
        elif op == OP_STEP:
            action = _read_exact(reader, 1)[0]
            if not started or terminated or action >= env.action_count:
                respond(0.0, STATUS_ERROR, zero_frame)
                continue
            result = env.step(action)
            terminated = result.terminated
            respond(
                result.reward,
                STATUS_TERMINATED if result.terminated else STATUS_RUNNING,
                _frame_to_u8(result.frame),
            )
        else:
            respond(0.0, STATUS_ERROR, zero_frame)
            return


def connect_tcp(host: str, port: int) -> RemoteEnv:
    """Open one environment connection over TCP."""
    sock = socket.create_connection((host, port))
    reader = sock.makefile("rb")
    writer = sock.makefile("wb")

    def cleanup() -> None:
        reader.close()
        writer.close()
        sock.close()

    return RemoteEnv(reader, writer, on_close=cleanup)


def connect_child(argv: list[str]) -> RemoteEnv:
    """Spawn a serving child process and talk over its standard streams."""
    proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)

    def cleanup() -> None:
        try:
            proc.stdin.close()
        except OSError:
            pass
        proc.wait(timeout=10)

    return RemoteEnv(proc.stdout, proc.stdin, on_close=cleanup)
