"""Layer-wise and unit-wise static/dynamic bias metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import column_pearson, live_columns, softmax
from ..pairgen.pairs import Factor

LAYER_FACTORS = (Factor.STATIC, Factor.DYNAMIC, Factor.IDENTICAL)
UNIT_FACTORS = (Factor.STATIC, Factor.DYNAMIC)
DEFAULT_THRESHOLD = 0.5
REDUCTIONS = ("mean", "mean_all", "sum")

STATIC, DYNAMIC, JOINT, RESIDUAL = "Static", "Dynamic", "Joint", "Residual"
UNIT_CLASSES = (STATIC, DYNAMIC, JOINT, RESIDUAL)


def _layer_columns(traces: dict, factor: Factor, layer: str):
    try:
        trace = traces[factor]
    except KeyError:
        raise ValueError(f"missing {factor.value} trace") from None
    if layer not in trace.layers:
        raise ValueError(f"{factor.value} trace has no layer {layer!r}")
    return trace.layers[layer]


def _by_factor(traces) -> dict:
    if isinstance(traces, dict):
        return {Factor(k): v for k, v in traces.items()}
    return {t.factor: t for t in traces}


def factor_scores(traces, layer: str, factors=LAYER_FACTORS) -> dict[Factor, np.ndarray]:
    """Per-channel correlation between the two sides of each pair, per factor."""
    traces = _by_factor(traces)
    out = {}
    width = None
    for f in factors:
        z1, z2 = _layer_columns(traces, Factor(f), layer)
        if width is not None and z1.shape[1] != width:
            raise ValueError(f"layer {layer!r} has {z1.shape[1]} channels in the {Factor(f).value} trace, "
                             f"{width} elsewhere")
        width = z1.shape[1]
        out[Factor(f)] = column_pearson(z1, z2)
    return out


def layer_bias(traces, layer: str, factors=LAYER_FACTORS, reduce: str = "mean"):
    """Return ``(S, N)``: per-factor score and softmax-apportioned unit count.

    ``reduce="mean"`` averages the channel correlations over live channels
    (those with variance on both sides of the trace), so the identical factor
    scores exactly 1 for every layer with a live channel. ``"mean_all"``
    divides by every channel, dead ones included, and ``"sum"`` keeps the raw
    channel sum.
    """
    if reduce not in REDUCTIONS:
        raise ValueError(f"reduce must be one of {REDUCTIONS}, got {reduce!r}")
    traces = _by_factor(traces)
    per_channel = factor_scores(traces, layer, factors)
    n_units = next(iter(per_channel.values())).size
    s = {}
    for f, c in per_channel.items():
        if reduce == "mean":
            live = live_columns(*_layer_columns(traces, f, layer))
            c = c[live]
        # plain left-to-right float64 sum: ascending channel order, fixed reduction
        total = float(sum(c.tolist()))
        if reduce == "sum":
            s[f] = total
        else:
            s[f] = total / c.size if c.size else 0.0
    n = dict(zip(s, softmax(list(s.values())) * n_units))
    return s, n


def apportion(scores: dict, n_units: int) -> dict:
    """Softmax of the given factor scores scaled to ``n_units``."""
    keys = list(scores)
    return dict(zip(keys, softmax([scores[k] for k in keys]) * n_units))


def unit_scores(traces, layer: str, factors=UNIT_FACTORS) -> np.ndarray:
    """(channels, len(factors)) matrix of per-unit correlations, columns in ``factors`` order."""
    per_channel = factor_scores(traces, layer, factors)
    return np.stack([per_channel[Factor(f)] for f in factors], axis=1)


def classify_units(scores, threshold: float = DEFAULT_THRESHOLD):
    """Assign each unit (row of a (N, 2) static/dynamic score matrix) one class.

    A score must strictly exceed ``threshold`` to count; ties fall to the
    weaker class. Returns (labels, counts).
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] != 2:
        raise ValueError(f"expected an (N, 2) static/dynamic score matrix, got {scores.shape}")
    hi_s = scores[:, 0] > threshold
    hi_d = scores[:, 1] > threshold
    labels = np.select([hi_s & hi_d, hi_s, hi_d], [JOINT, STATIC, DYNAMIC], default=RESIDUAL)
    counts = {c: int(np.sum(labels == c)) for c in UNIT_CLASSES}
    return labels, counts


def center_bias(masks) -> np.ndarray:
    """Per-pixel foreground frequency over ``masks``, scaled so the maximum is 1."""
    masks = [np.asarray(m, dtype=np.float64) for m in masks]
    if not masks:
        raise ValueError("center bias needs at least one mask")
    freq = np.mean(np.stack(masks), axis=0)
    top = freq.max()
    return freq / top if top > 0 else freq


@dataclass
class LayerReport:
    channels: int
    scores: dict  # factor name -> S_F (three-factor)
    units: dict  # factor name -> N_F over {static, dynamic, identical}
    units_two_factor: dict  # N_F over {static, dynamic} only
    unit_counts: dict  # Static/Dynamic/Joint/Residual
    unit_scores: list  # per channel [s_static, s_dynamic]
    unit_classes: list

    @property
    def dynamic_ratio(self) -> float:
        d, s = self.unit_counts[DYNAMIC], self.unit_counts[STATIC]
        return d / (d + s) if d + s else 0.5


@dataclass
class BiasReport:
    threshold: float
    reduce: str
    layers: dict[str, LayerReport] = field(default_factory=dict)
    epoch: int | None = None

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "reduce": self.reduce,
            "epoch": self.epoch,
            "layers": {name: vars(lr) for name, lr in self.layers.items()},
        }


def bias_report(traces, layers=None, threshold: float = DEFAULT_THRESHOLD,
                reduce: str = "mean", epoch: int | None = None) -> BiasReport:
    """Full per-layer report from one trace per factor in {static, dynamic, identical}."""
    traces = _by_factor(traces)
    if layers is None:
        layers = list(traces[Factor.STATIC].layers)
    report = BiasReport(threshold, reduce, epoch=epoch)
    for layer in layers:
        s, n = layer_bias(traces, layer, LAYER_FACTORS, reduce)
        us = unit_scores(traces, layer)
        n2 = apportion({f: s[f] for f in UNIT_FACTORS}, us.shape[0])
        labels, counts = classify_units(us, threshold)
        report.layers[layer] = LayerReport(
            channels=us.shape[0],
            scores={f.value: v for f, v in s.items()},
            units={f.value: float(v) for f, v in n.items()},
            units_two_factor={f.value: float(v) for f, v in n2.items()},
            unit_counts=counts,
            unit_scores=us.tolist(),
            unit_classes=labels.tolist(),
        )
    return report


def epoch_sweep(checkpoints, pair_sets: dict, layers=None, threshold: float = DEFAULT_THRESHOLD,
                reduce: str = "mean", key_frame: int = 0) -> list[BiasReport]:
    """One report per checkpoint, all probed with the same fixed pair sets."""
    from .trace import collect_trace

    out = []
    for ckpt in checkpoints:
        model = ckpt.restore()
        traces = {Factor(f): collect_trace(model, pairs, layers, key_frame=key_frame)
                  for f, pairs in pair_sets.items()}
        out.append(bias_report(traces, layers, threshold, reduce, epoch=ckpt.epoch))
    return out
