"""Deterministic numerical kernels shared by the rest of the package."""

from .core import (
    CorrAccumulator,
    NonFiniteError,
    column_pearson,
    live_columns,
    ensure_finite,
    gap_pool,
    pearson,
    sigmoid,
    softmax,
)
from .kernels import BACKEND
from .rng import Rng

__all__ = [
    "BACKEND",
    "CorrAccumulator",
    "NonFiniteError",
    "Rng",
    "column_pearson",
    "live_columns",
    "ensure_finite",
    "gap_pool",
    "pearson",
    "sigmoid",
    "softmax",
]
