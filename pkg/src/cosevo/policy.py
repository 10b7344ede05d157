"""Bilinear affine policy: coefficient block in, action logits out.

The map is w1 @ X @ w2 (+ bias), with w1 of shape (m, k) and w2 of shape
(k, n); the m x n output is flattened row-major into logits. With the
defaults m = 1 and n = 6 the output maps directly onto the six-action set.
The bias is off by default: the published parameter counts equal
k * (m + n) with no bias term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .sparsity import SparseBlock


@dataclass(frozen=True)
class PolicyParams:
    """Weights of the bilinear affine map."""

    m: int
    n: int
    k: int
    w1: np.ndarray
    w2: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.w1.shape != (self.m, self.k):
            raise ShapeError(f"w1 must be {(self.m, self.k)}, got {self.w1.shape}")
        if self.w2.shape != (self.k, self.n):
            raise ShapeError(f"w2 must be {(self.k, self.n)}, got {self.w2.shape}")
        if self.bias is not None and self.bias.shape != (self.m, self.n):
            raise ShapeError(f"bias must be {(self.m, self.n)}, got {self.bias.shape}")


@dataclass(frozen=True)
class ActionLogits:
    """Unnormalized action preferences, length m * n."""

    values: np.ndarray


def forward(params: PolicyParams, sparse: SparseBlock) -> ActionLogits:
    """Apply the bilinear affine map to a sparse coefficient block."""
    if sparse.block.k != params.k:
        raise ShapeError(
            f"input block is {sparse.block.k}x{sparse.block.k}, "
            f"policy expects k={params.k}"
        )
    y = params.w1 @ sparse.block.coeffs @ params.w2
    if params.bias is not None:
        y = y + params.bias
    return ActionLogits(values=y.reshape(-1))


def select_action(logits: ActionLogits) -> int:
    """Index of the highest logit; ties break to the lowest index."""
    if logits.values.size == 0:
        raise ShapeError("cannot select an action from empty logits")
    return int(np.argmax(logits.values))


def param_count(k: int, m: int = 1, n: int = 6, include_bias: bool = False) -> int:
    """Number of free parameters: m*k + k*n, plus m*n when the bias is enabled."""
    if k < 1 or m < 1 or n < 1:
        raise ShapeError(f"dimensions must be positive, got k={k} m={m} n={n}")
    count = m * k + k * n
    if include_bias:
        count += m * n
    return count


def flatten(params: PolicyParams) -> np.ndarray:
    """Pack parameters into a flat vector: w1 row-major, w2 row-major, then bias."""
    parts = [params.w1.ravel(), params.w2.ravel()]
    if params.bias is not None:
        parts.append(params.bias.ravel())
    return np.concatenate(parts)


def unflatten(
    v: np.ndarray, k: int, m: int = 1, n: int = 6, include_bias: bool = False
) -> PolicyParams:
    """Rebuild PolicyParams from a flat vector laid out by flatten()."""
    v = np.asarray(v, dtype=np.float64)
    expected = param_count(k, m, n, include_bias)
    if v.shape != (expected,):
        raise ShapeError(f"expected vector of length {expected}, got shape {v.shape}")
    w1 = v[: m * k].reshape(m, k)
    w2 = v[m * k : m * k + k * n].reshape(k, n)
    bias = v[m * k + k * n :].reshape(m, n) if include_bias else None
    return PolicyParams(m=m, n=n, k=k, w1=w1, w2=w2, bias=bias)
