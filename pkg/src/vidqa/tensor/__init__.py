"""Minimal float32 tensor library with tape-based reverse-mode autodiff and Adam."""

from . import ops
from .core import (
    DTYPE,
    DetachedLossError,
    ShapeError,
    Tape,
    Tensor,
    VocabularyError,
    active_tape,
    as_tensor,
    backward,
)
from .gradcheck import grad_check
from .optim import Adam, AdamState, NonFiniteGradientError, adam_step


def seeded_rng(seed: int):
    """Deterministic generator (PCG64) for a 64-bit seed."""
    import numpy as np

    return np.random.default_rng(seed)


__all__ = [
    "DTYPE", "Adam", "AdamState", "DetachedLossError", "NonFiniteGradientError", "ShapeError",
    "Tape", "Tensor", "VocabularyError", "active_tape", "adam_step", "as_tensor", "backward",
    "grad_check", "ops", "seeded_rng",
]
