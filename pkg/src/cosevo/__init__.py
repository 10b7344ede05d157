"""Derivative-free policy evolution over sparsified cosine-transform features.

Pipeline: a grayscale frame is compressed to the top-left k x k block of its
orthonormal 2D cosine transform, thinned by a percentile threshold on
coefficient magnitude, and mapped to action logits by a bilinear affine
policy whose flattened weights are optimized with CMA-ES against episodic
game scores.
"""

from .env import ACTIONS, EnvConfig, GameRules, ShooterEnv, StepResult, wrap_frame_skip, wrap_sticky
from .policy import ActionLogits, PolicyParams, flatten, forward, param_count, select_action, unflatten
from .sparsity import SparseBlock, SupportMask, percentile_threshold, sparsify, support
from .trainer import EvalReport, TrainConfig, evaluate_policy, robustness_eval, train
from .transform import CoeffBlock, DctBasis, Frame, build_basis, dct2_full, dct2_truncated, energy, frame_from_u8, idct2

__version__ = "0.1.0"

__all__ = [
    "ACTIONS",
    "ActionLogits",
    "CoeffBlock",
    "DctBasis",
    "EnvConfig",
    "EvalReport",
    "Frame",
    "GameRules",
    "PolicyParams",
    "ShooterEnv",
    "SparseBlock",
    "StepResult",
    "SupportMask",
    "TrainConfig",
    "build_basis",
    "dct2_full",
    "dct2_truncated",
    "energy",
    "evaluate_policy",
    "flatten",
    "forward",
    "frame_from_u8",
    "idct2",
    "param_count",
    "percentile_threshold",
    "robustness_eval",
    "select_action",
    "sparsify",
    "support",
    "train",
    "unflatten",
    "wrap_frame_skip",
    "wrap_sticky",
]
