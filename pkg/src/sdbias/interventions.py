"""Unit-level interventions: top-k channel removal and StaticDropout."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .modelzoo.models import Kind, Model
from .modelzoo.train import DropoutConfig, TrainConfig, shuffle_video, train
from .numerics import Rng, column_pearson, softmax
from .numerics import kernels
from .pairgen.pairs import Factor, FactorPair
from .probe.trace import collect_trace

TOP_BIASED = "TopBiased"
RANDOM_LEAST_BIASED = "RandomLeastBiased"
PURE_RANDOM = "PureRandom"
POOL_MARGIN_PERCENT = 5.0


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def percent_count(percent: float, n: int) -> int:
    return round_half_up(percent * n / 100.0)


@dataclass
class RemovalPlan:
    layer: str
    channels: list[int]
    mode: str = TOP_BIASED
    factor: str | None = None
    k: int | None = None
    seed: int | None = None

    def __post_init__(self):
        self.channels = [int(c) for c in self.channels]
        if len(set(self.channels)) != len(self.channels):
            raise ValueError("removal plan lists a channel twice")
        if self.k is None:
            self.k = len(self.channels)

    def to_dict(self) -> dict:
        return asdict(self)


def rank_by_score(scores) -> np.ndarray:
    """Channel indices, most biased first; ties keep ascending index order."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def top_biased(scores, k: int) -> list[int]:
    return rank_by_score(scores)[:k].tolist()


def rank_random_least_biased(scores, x_percent: float, rng: Rng) -> list[int]:
    """Sample x% of the units uniformly from the (x+5)% least biased toward the dominant factor.

    ``scores`` are the per-channel scores for the layer's dominant factor.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    take = percent_count(x_percent, n)
    if take == 0:
        return []
    pool_size = min(n, max(take, percent_count(x_percent + POOL_MARGIN_PERCENT, n)))
    pool = np.argsort(scores, kind="stable")[:pool_size]
    return sorted(int(c) for c in rng.choice(pool, size=take, replace=False))


def pure_random(n: int, k: int, rng: Rng) -> list[int]:
    return sorted(int(c) for c in rng.choice(n, size=k, replace=False))


def remove_units(model: Model, plan: RemovalPlan) -> Model:
    """Copy of ``model`` whose planned channels are forced to zero at ``plan.layer``.

    Masks compose with any removal already present on the model.
    """
    if plan.layer not in model.probe_layers:
        raise ValueError(f"unknown layer {plan.layer!r}")
    n = model.layer_channels(plan.layer)
    bad = [c for c in plan.channels if not 0 <= c < n]
    if bad:
        raise IndexError(f"channels {bad} out of range for layer {plan.layer!r} with {n} channels")
    out = model.clone()
    mask = out.masks.get(plan.layer, np.ones(n, dtype=model.dtype)).copy()
    mask[plan.channels] = 0
    out.masks[plan.layer] = mask
    return out


# ------------------------------------------------------------------ StaticDropout

@dataclass
class DropoutState:
    layer: str
    scores: list[float]
    probs: list[float]
    rate: float
    period: int = 30
    iteration: int = 0
    seed: int | None = None
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def static_scores_for_dropout(model: Model, videos, layer: str, rng: Rng, key_frame: int = 0) -> np.ndarray:
    """Per-channel correlation between each clip and its frame-shuffled copy."""
    if len(videos) < 8:
        raise ValueError(f"static scores need a batch of at least 8 clips, got {len(videos)}")
    keep_flow = model.descriptor.kind is Kind.TWO_STREAM
    pairs = [FactorPair(v, shuffle_video(v, rng.child(i), keep_flow), Factor.STATIC)
             for i, v in enumerate(videos)]
    trace = collect_trace(model, pairs, [layer], key_frame=key_frame)
    z1, z2 = trace.layers[layer]
    return column_pearson(z1, z2)


def static_dropout_probs(scores) -> np.ndarray:
    """Drop probability per channel: softmax of the static scores."""
    return softmax(scores)


def dropout_multipliers(probs, rate: float, batch: int, rng: Rng) -> np.ndarray:
    """(batch, C) channel multipliers: round(rate * C) channels zeroed per sample,
    drawn without replacement proportionally to ``probs``; survivors scaled by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    probs = np.asarray(probs, dtype=np.float64)
    c = probs.size
    m = round_half_up(rate * c)
    mult = np.full((batch, c), 1.0 / (1.0 - rate))
    if m == 0:
        return np.ones((batch, c))
    u = rng.random((batch, m))
    picks = kernels.weighted_sample_without_replacement(np.broadcast_to(probs, (batch, c)), m, u)
    np.put_along_axis(mult, picks, 0.0, axis=1)
    return mult


def apply_static_dropout(activations, state: DropoutState, rng: Rng, training: bool = True):
    """Zero a probability-weighted channel subset per sample; identity at inference."""
    if not 0.0 <= state.rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {state.rate}")
    activations = np.asarray(activations)
    if not training or state.rate == 0.0:
        return activations
    mult = dropout_multipliers(state.probs, state.rate, activations.shape[0], rng)
    shape = (activations.shape[0],) + (1,) * (activations.ndim - 2) + (activations.shape[-1],)
    return (activations * mult.reshape(shape)).astype(activations.dtype, copy=False)


def finetune_no_dropout(model: Model, dataset, epochs: int, lr: float, rng: Rng,
                        batch: int = 32, momentum: float = 0.9) -> Model:
    """Plain SGD on a copy of ``model`` with every dropout disabled."""
    out = model.clone()
    if epochs == 0:
        return out
    cfg = TrainConfig(epochs=epochs, lr=lr, momentum=momentum, batch=batch,
                      checkpoint_every=0, dropout=DropoutConfig())
    train(out, dataset, cfg, rng)
    return out
