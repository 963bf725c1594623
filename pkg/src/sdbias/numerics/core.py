from __future__ import annotations

import numpy as np

from . import kernels

# A channel whose standard deviation is below this fraction of its mean
# magnitude is treated as constant; float32 data cannot resolve finer spreads.
_REL_STD_FLOOR = 1e-10


class NonFiniteError(FloatingPointError):
    """A public operation produced NaN or Inf."""


def ensure_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{what} contains non-finite values")
    return x


def _degenerate(std: np.ndarray, mean: np.ndarray) -> np.ndarray:
    return (std == 0.0) | (std <= _REL_STD_FLOOR * np.abs(mean))


def _corr_from_moments(mean_a, mean_b, m2_a, m2_b, co, n):
    std_a = np.sqrt(np.maximum(m2_a, 0.0) / n)
    std_b = np.sqrt(np.maximum(m2_b, 0.0) / n)
    bad = _degenerate(std_a, mean_a) | _degenerate(std_b, mean_b)
    denom = np.where(bad, 1.0, std_a * std_b * n)
    r = np.where(bad, 0.0, co / denom)
    return np.clip(r, -1.0, 1.0)


def pearson(a, b) -> float:
    """Population Pearson correlation of two vectors.

    Returns 0.0 when either side has zero variance (a dead unit carries no
    factor information). Raises ValueError on length mismatch or fewer than
    two samples.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("pearson needs at least two samples")
    return float(column_pearson(a[:, None], b[:, None])[0])


def column_pearson(z1, z2) -> np.ndarray:
    """Per-column Pearson correlation between two (n, C) matrices, in float64.

    Two-pass evaluation; degenerate columns yield 0.
    """
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape or z1.ndim != 2:
        raise ValueError(f"expected two matrices of equal shape, got {z1.shape} and {z2.shape}")
    n = z1.shape[0]
    if n < 2:
        raise ValueError("pearson needs at least two samples")
    ma = z1.mean(axis=0)
    mb = z2.mean(axis=0)
    da = z1 - ma
    db = z2 - mb
    return _corr_from_moments(ma, mb, (da * da).sum(axis=0), (db * db).sum(axis=0),
                              (da * db).sum(axis=0), n)


def live_columns(z1, z2) -> np.ndarray:
    """Boolean mask of columns whose correlation is defined (variance on both sides)."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape or z1.ndim != 2:
        raise ValueError(f"expected two matrices of equal shape, got {z1.shape} and {z2.shape}")
    ma, mb = z1.mean(axis=0), z2.mean(axis=0)
    std_a = np.sqrt(((z1 - ma) ** 2).mean(axis=0))
    std_b = np.sqrt(((z2 - mb) ** 2).mean(axis=0))
    return ~(_degenerate(std_a, ma) | _degenerate(std_b, mb))


class CorrAccumulator:
    """Streaming per-channel Pearson correlation with float64 moments.

    Rows are folded in the order they are supplied; the same row order always
    reproduces the same result.
    """

    def __init__(self, channels: int):
        self.channels = int(channels)
        self.count = 0
        self.mean_a = np.zeros(self.channels)
        self.mean_b = np.zeros(self.channels)
        self.m2_a = np.zeros(self.channels)
        self.m2_b = np.zeros(self.channels)
        self.co_moment = np.zeros(self.channels)

    def update(self, a, b) -> CorrAccumulator:
        a = np.atleast_2d(np.asarray(a))
        b = np.atleast_2d(np.asarray(b))
        if a.shape != b.shape or a.shape[1] != self.channels:
            raise ValueError(f"expected rows of {self.channels} channels, got {a.shape} and {b.shape}")
        self.count = kernels.corr_update(a, b, self.count, self.mean_a, self.mean_b,
                                         self.m2_a, self.m2_b, self.co_moment)
        return self

    def finalize(self) -> np.ndarray:
        if self.count < 2:
            raise ValueError("pearson needs at least two samples")
        return _corr_from_moments(self.mean_a, self.mean_b, self.m2_a, self.m2_b,
                                  self.co_moment, self.count)


def softmax(scores) -> np.ndarray:
    """Shift-invariant softmax over a 1-D score vector."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("softmax of an empty vector")
    ensure_finite(s, "scores")
    e = np.exp(s - s.max())
    return e / e.sum()


def gap_pool(t, channel_axis: int = -1) -> np.ndarray:
    """Mean over every axis except the channel axis."""
    t = np.asarray(t)
    if t.ndim == 0:
        raise ValueError("gap_pool needs a tensor with a channel axis")
    axis = channel_axis % t.ndim
    others = tuple(i for i in range(t.ndim) if i != axis)
    return t.mean(axis=others) if others else t.copy()


def sigmoid(x):
    # split form avoids overflow in exp for large |x|
    x = np.asarray(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
