"""Orthonormal type-II discrete cosine transform in one and two dimensions.

The basis of size N has rows

    rows[k, n] = a_k * cos(pi / N * (n + 1/2) * k),    n = 0 .. N-1

with a_0 = sqrt(1/N) and a_k = sqrt(2/N) for k > 0, so that the rows form
an orthonormal set and the transform preserves energy (Parseval). The 2D
transform of a matrix M is A_H @ M @ A_W.T; the truncated variant computes
only the top-left k x k coefficient block using sliced basis matrices,
avoiding the full transform when k is small.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSizeError, InvalidTruncationError, ShapeError


@dataclass(frozen=True)
class Frame:
    """A single grayscale observation: an H x W pixel grid with values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        p = self.pixels
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ShapeError(f"frame must be a nonempty 2D grid, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ShapeError("frame contains non-finite pixels")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ShapeError("frame pixels must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def frame_from_u8(raw: np.ndarray) -> Frame:
    """Normalize an 8-bit grayscale image into a Frame (divide by 255)."""
    return Frame(np.asarray(raw, dtype=np.float64) / 255.0)


@dataclass(frozen=True)
class DctBasis:
    """Orthonormal cosine basis of a given size; rows are the basis vectors."""

    size: int
    rows: np.ndarray


@dataclass(frozen=True)
class CoeffBlock:
    """Top-left k x k block of a 2D transform, with the source frame size."""

    k: int
    coeffs: np.ndarray
    source_height: int
    source_width: int

    def __post_init__(self) -> None:
        if self.k > min(self.source_height, self.source_width):
            raise InvalidTruncationError(
                f"k={self.k} exceeds min(source dims)="
                f"{min(self.source_height, self.source_width)}"
            )
        if self.coeffs.shape != (self.k, self.k):
            raise ShapeError(
                f"coefficient block must be {self.k}x{self.k}, got {self.coeffs.shape}"
            )


_basis_cache: dict[int, DctBasis] = {}
_basis_lock = threading.Lock()


def build_basis(n: int) -> DctBasis:
    """Return the orthonormal cosine basis of size n (cached per size)."""
    if n < 1:
        raise InvalidSizeError(f"basis size must be >= 1, got {n}")
    cached = _basis_cache.get(n)
    if cached is not None:
        return cached
    k = np.arange(n, dtype=np.float64)[:, None]
    m = np.arange(n, dtype=np.float64)[None, :]
    rows = np.cos(np.pi / n * (m + 0.5) * k)
    rows[0, :] *= np.sqrt(1.0 / n)
    rows[1:, :] *= np.sqrt(2.0 / n)
    rows.setflags(write=False)
    basis = DctBasis(size=n, rows=rows)
    with _basis_lock:
        return _basis_cache.setdefault(n, basis)


def dct2_full(frame: Frame) -> np.ndarray:
    """Full 2D transform: A_H @ pixels @ A_W.T, shape (H, W)."""
    ah = build_basis(frame.height).rows
    aw = build_basis(frame.width).rows
    return ah @ frame.pixels @ aw.T


def dct2_truncated(frame: Frame, k: int) -> CoeffBlock:
    """Top-left k x k coefficient block, computed with sliced basis matrices.

    Costs O(k*H*W + k*k*W) instead of the full transform's O(H*W*(H+W)).
    """
    h, w = frame.height, frame.width
    if k < 1 or k > min(h, w):
        raise InvalidTruncationError(f"k={k} out of range 1..{min(h, w)}")
    ah_k = build_basis(h).rows[:k]
    aw_k = build_basis(w).rows[:k]
    coeffs = ah_k @ frame.pixels @ aw_k.T
    return CoeffBlock(k=k, coeffs=coeffs, source_height=h, source_width=w)


def idct2(coeffs: np.ndarray) -> np.ndarray:
    """Invert dct2_full: A_H.T @ coeffs @ A_W."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim != 2:
        raise ShapeError(f"coefficient matrix must be 2D, got shape {coeffs.shape}")
    ah = build_basis(coeffs.shape[0]).rows
    aw = build_basis(coeffs.shape[1]).rows
    return ah.T @ coeffs @ aw


def energy(m: np.ndarray) -> float:
    """Sum of squared entries; preserved by the orthonormal transform."""
    m = np.asarray(m, dtype=np.float64)
    return float(np.sum(m * m))
