"""SGD-with-momentum training, evaluation, and frame shuffling helpers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..numerics import Rng
from ..pairgen.pairs import random_nonidentity_permutation
from ..pairgen.video import Video, flow_analog
from .models import Head, Kind, Model, ModelCheckpoint, model_inputs, model_targets

log = logging.getLogger(__name__)


class NumericFailure(FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int, batch: int, sample_ids: list[int]):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.sample_ids = sample_ids


@dataclass
class DropoutConfig:
    kind: str = "none"  # none | standard | static
    rate: float = 0.0
    layer: str | None = None  # None -> last block before the head
    period: int = 30  # static scores are re-estimated every `period` iterations
    warmup_epochs: int = 0  # plain epochs before dropout switches on

    def __post_init__(self):
        if self.kind not in ("none", "standard", "static"):
            raise ValueError(f"unknown dropout kind {self.kind!r}")
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {self.rate}")
        if self.warmup_epochs < 0 or self.period < 1:
            raise ValueError("warmup_epochs must be >= 0 and period >= 1")


@dataclass
class TrainConfig:
    epochs: int = 10
    lr: float = 0.05
    momentum: float = 0.9
    batch: int = 32
    checkpoint_every: int = 1
    dropout: DropoutConfig = field(default_factory=DropoutConfig)
    shuffle_frames: bool = False
    key_frame: int = 0


def shuffle_video(v: Video, rng: Rng, keep_flow: bool = True) -> Video:
    """Non-identity frame permutation; flow is recomputed from the new order or dropped."""
    perm = random_nonidentity_permutation(rng, v.rgb.shape[0])
    rgb = v.rgb[perm]
    mask = None if v.mask is None else v.mask[perm]
    flow = flow_analog(rgb) if keep_flow and v.flow is not None else None
    return v.with_rgb(rgb, flow=flow, mask=mask)


def shuffled(videos: list[Video], rng: Rng, keep_flow: bool = True) -> list[Video]:
    """Each video gets its own non-identity frame permutation from substream ``i``."""
    return [shuffle_video(v, rng.child(i), keep_flow) for i, v in enumerate(videos)]


def default_dropout_layer(model: Model) -> str:
    layers = model.probe_layers
    return "fusion" if "fusion" in layers else layers[-1]


def _snapshot(model: Model, velocity: dict, epoch: int, rng: Rng, meta: dict) -> ModelCheckpoint:
    return ModelCheckpoint(
        descriptor=model.descriptor,
        params={k: v.copy() for k, v in model.params.items()},
        velocity={k: v.copy() for k, v in velocity.items()},
        epoch=epoch,
        rng_state=rng.get_state(),
        meta=dict(meta),
        video_shape=_video_shape(model),
        masks={k: v.copy() for k, v in model.masks.items()},
    )


def _video_shape(model: Model) -> tuple:
    if hasattr(model, "video_shape"):
        return tuple(model.video_shape)
    shape = tuple(model.input_shape)
    return shape if len(shape) == 3 else (8,) + shape


def train(model: Model, dataset: list[Video], config: TrainConfig, rng: Rng,
          velocity: dict | None = None, start_epoch: int = 0, iteration: int = 0,
          static_probs=None, on_checkpoint=None) -> list[ModelCheckpoint]:
    """Train ``model`` in place and return its checkpoints.

    A checkpoint is taken before the first update (epoch ``start_epoch``),
    after every ``checkpoint_every`` epochs, and after the final epoch; each
    is also handed to ``on_checkpoint`` as soon as it exists. Dropout stays
    off through epoch ``warmup_epochs``. To resume, pass the velocity, epoch,
    iteration and static drop probabilities stored in the last checkpoint.
    """
    if not dataset:
        raise ValueError("cannot train on an empty dataset")
    from .. import interventions  # StaticDropout lives with the other unit-level interventions

    velocity = velocity or {k: np.zeros_like(v) for k, v in model.params.items()}
    n = len(dataset)
    drop = config.dropout
    drop_layer = drop.layer or default_dropout_layer(model)
    meta = {"seed": rng.seed, "label": rng.label}
    two_stream = model.descriptor.kind is Kind.TWO_STREAM
    if static_probs is not None:
        static_probs = np.asarray(static_probs, dtype=np.float64)
    checkpoints = []

    def take(epoch):
        meta.update(iteration=iteration,
                    static_probs=None if static_probs is None else static_probs.tolist())
        ckpt = _snapshot(model, velocity, epoch, rng, meta)
        checkpoints.append(ckpt)
        if on_checkpoint is not None:
            on_checkpoint(ckpt)

    take(start_epoch)
    for epoch in range(start_epoch + 1, start_epoch + config.epochs + 1):
        erng = rng.child(f"epoch/{epoch}")
        order = erng.permutation(n)
        data = (shuffled(dataset, erng.child("shuffle"), keep_flow=two_stream)
                if config.shuffle_frames else dataset)
        for bi, start in enumerate(range(0, n, config.batch)):
            ids = order[start:start + config.batch]
            vids = [data[i] for i in ids]
            x = model_inputs(model, vids, config.key_frame)
            y = model_targets(model, vids, config.key_frame)
            brng = erng.child(f"batch/{bi}")
            if drop.kind != "none" and drop.rate > 0 and epoch > drop.warmup_epochs:
                channels = model.layer_channels(drop_layer)
                if drop.kind == "standard":
                    keep = brng.random((len(ids), channels)) >= drop.rate
                    noise = keep / (1.0 - drop.rate)
                else:
                    if static_probs is None or iteration % drop.period == 0:
                        scores = interventions.static_scores_for_dropout(
                            model, vids, drop_layer, brng.child("scores"), key_frame=config.key_frame)
                        static_probs = interventions.static_dropout_probs(scores)
                    noise = interventions.dropout_multipliers(static_probs, drop.rate, len(ids),
                                                              brng.child("drop"))
                model.channel_noise[drop_layer] = noise
            try:
                loss, grads = model.loss_and_grad(x, y)
            finally:
                model.channel_noise.clear()
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NumericFailure(
                    f"non-finite loss at epoch {epoch}, batch {bi} (samples {ids.tolist()})",
                    epoch, bi, ids.tolist())
            for k, g in grads.items():
                v = velocity[k]
                v *= config.momentum
                v += g
                model.params[k] -= (config.lr * v).astype(model.dtype)
            iteration += 1
        log.debug("epoch %d done, last batch loss %.4f", epoch, loss)
        last = epoch == start_epoch + config.epochs
        if last or (config.checkpoint_every and (epoch - start_epoch) % config.checkpoint_every == 0):
            take(epoch)
    return checkpoints


def predict(model: Model, videos: list[Video], batch: int = 64, key_frame: int = 0) -> np.ndarray:
    outs = []
    for start in range(0, len(videos), batch):
        outs.append(model.forward(model_inputs(model, videos[start:start + batch], key_frame)))
    return np.concatenate(outs)


def evaluate(model: Model, videos: list[Video], batch: int = 64, key_frame: int = 0) -> float:
    """Top-1 accuracy for classifiers, mean per-clip IoU for segmenters."""
    out = predict(model, videos, batch, key_frame)
    if model.descriptor.head is Head.CLASSIFIER:
        labels = np.array([v.label for v in videos])
        return float(np.mean(out.argmax(axis=1) == labels))
    pred = out > 0.0
    truth = np.stack([v.mask[key_frame] for v in videos]).astype(bool)
    inter = (pred & truth).sum(axis=(1, 2))
    union = (pred | truth).sum(axis=(1, 2))
    iou = np.where(union > 0, inter / np.maximum(union, 1), 1.0)
    return float(iou.mean())
