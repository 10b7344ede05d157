"""Percentile sparsification of coefficient blocks and support extraction.

The threshold for percentile p is nearest-rank: the value at 1-based index
ceil(p/100 * k^2) of the ascending sort of absolute values (p = 0 keeps
everything by thresholding at the minimum). Entries with absolute value
greater than or equal to the threshold survive unchanged; ties are kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidPercentileError
from .transform import CoeffBlock


@dataclass(frozen=True)
class SupportMask:
    """Boolean mask of surviving (nonzero) coefficient positions."""

    k: int
    kept: np.ndarray
    kept_count: int


@dataclass(frozen=True)
class SparseBlock:
    """A coefficient block after thresholding, plus its support and threshold."""

    block: CoeffBlock
    mask: SupportMask
    threshold: float


def percentile_threshold(coeffs: np.ndarray, p: float) -> float:
    """Nearest-rank p-th percentile of the absolute values of coeffs."""
    if not 0.0 <= p < 100.0:
        raise InvalidPercentileError(f"percentile must be in [0, 100), got {p}")
    flat = np.abs(np.asarray(coeffs, dtype=np.float64)).ravel()
    size = flat.size
    rank = 1 if p == 0.0 else math.ceil(p * size / 100.0)
    rank = max(rank, 1)
    ordered = np.sort(flat)
    return float(ordered[rank - 1])


def sparsify(block: CoeffBlock, p: float) -> SparseBlock:
    """Zero every coefficient whose magnitude falls below the p-th percentile.

    Survivors are preserved bit-exactly; ties at the threshold are kept.
    """
    tau = percentile_threshold(block.coeffs, p)
    coeffs = np.where(np.abs(block.coeffs) >= tau, block.coeffs, 0.0)
    kept = coeffs != 0.0
    out = CoeffBlock(
        k=block.k,
        coeffs=coeffs,
        source_height=block.source_height,
        source_width=block.source_width,
    )
    mask = SupportMask(k=block.k, kept=kept, kept_count=int(np.count_nonzero(kept)))
    return SparseBlock(block=out, mask=mask, threshold=tau)


def support(sparse: SparseBlock) -> SupportMask:
    """Support set of a sparse block: the positions holding nonzero values."""
    kept = sparse.block.coeffs != 0.0
    return SupportMask(
        k=sparse.block.k, kept=kept, kept_count=int(np.count_nonzero(kept))
    )
