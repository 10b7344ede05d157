"""Minimal 8-bit binary PGM (P5) reader and writer for frame files."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .transform import Frame, frame_from_u8


def _read_token(fh) -> bytes:
    tok = b""
    while True:
        c = fh.read(1)
        if not c:
            raise ShapeError("unexpected end of PGM header")
        if c == b"#":  # comment runs to end of line
            while c not in (b"\n", b""):
                c = fh.read(1)
            continue
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def read_pgm(path: str) -> Frame:
    with open(path, "rb") as fh:
        if _read_token(fh) != b"P5":
            raise ShapeError(f"{path} is not a binary PGM (P5) file")
        width = int(_read_token(fh))
        height = int(_read_token(fh))
        maxval = int(_read_token(fh))
        if maxval != 255:
            raise ShapeError(f"only maxval 255 is supported, got {maxval}")
        data = fh.read(width * height)
        if len(data) != width * height:
            raise ShapeError(f"{path} is truncated")
    raw = np.frombuffer(data, dtype=np.uint8).reshape(height, width)
    return frame_from_u8(raw)


def write_pgm(frame: Frame, path: str) -> None:
    raw = np.rint(frame.pixels * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{frame.width} {frame.height}\n255\n".encode())
        fh.write(raw.tobytes())
