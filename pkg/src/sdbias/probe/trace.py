"""Activation traces: pooled per-channel activations for both sides of each pair."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..formats import FormatError, read_raw, write_raw
from ..modelzoo.models import model_inputs
from ..pairgen.pairs import Factor, FactorPair

TRACE_VERSION = 1


@dataclass
class ActivationTrace:
    """``layers[name] = (z1, z2)``, each (num_pairs, channels) float32; row k is pair k."""

    factor: Factor
    layers: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        self.factor = Factor(self.factor)
        for name, (z1, z2) in self.layers.items():
            if z1.shape != z2.shape or z1.ndim != 2:
                raise ValueError(f"layer {name}: z1 {z1.shape} and z2 {z2.shape} must be equal 2-D shapes")
            if z1.shape[0] < 2:
                raise ValueError(f"layer {name}: a trace needs at least two pairs")

    def channels(self, layer: str) -> int:
        return self.layers[layer][0].shape[1]


def pool_batch(acts: np.ndarray) -> np.ndarray:
    """Global average pool of a batch (B, ..., C) -> (B, C)."""
    axes = tuple(range(1, acts.ndim - 1))
    return acts.mean(axis=axes) if axes else acts


def _pooled(model, videos, layers, batch, key_frame):
    rows = {name: [] for name in layers}
    for start in range(0, len(videos), batch):
        x = model_inputs(model, videos[start:start + batch], key_frame)
        _, acts = model.forward(x, capture=True)
        for name in layers:
            rows[name].append(pool_batch(acts[name]).astype(np.float32))
    return {name: np.concatenate(r) for name, r in rows.items()}


def collect_trace(model, pairs: list[FactorPair], layers=None, batch: int = 64,
                  key_frame: int = 0) -> ActivationTrace:
    """Run both sides of every pair through ``model`` and pool each probe layer."""
    if not pairs:
        raise ValueError("no pairs to trace")
    factors = {p.shared_factor for p in pairs}
    if len(factors) != 1:
        raise ValueError(f"pairs mix factors {sorted(f.value for f in factors)}")
    layers = list(layers or model.probe_layers)
    unknown = set(layers) - set(model.probe_layers)
    if unknown:
        raise ValueError(f"unknown probe layers {sorted(unknown)}")
    z1 = _pooled(model, [p.video_a for p in pairs], layers, batch, key_frame)
    z2 = _pooled(model, [p.video_b for p in pairs], layers, batch, key_frame)
    return ActivationTrace(factors.pop(), {name: (z1[name], z2[name]) for name in layers})


def _safe_name(name: str) -> str:
    if not name or any(c in name for c in "/\\") or name.startswith("."):
        raise ValueError(f"layer name {name!r} cannot be used as a file stem")
    return name


def write_trace(trace: ActivationTrace, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, (z1, z2) in trace.layers.items():
        stem = _safe_name(name)
        files = {"z1": f"{stem}.z1.f32", "z2": f"{stem}.z2.f32"}
        write_raw(path / files["z1"], z1, "<f4")
        write_raw(path / files["z2"], z2, "<f4")
        entries.append({"name": name, "channels": int(z1.shape[1]), "pairs": int(z1.shape[0]),
                        "files": files})
    manifest = {"version": TRACE_VERSION, "factor": trace.factor.value, "layers": entries}
    mpath = path / "trace.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return mpath


def read_trace(path) -> ActivationTrace:
    path = Path(path)
    mpath = path / "trace.json"
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FormatError(f"{mpath}: no trace manifest") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mpath}: malformed manifest at byte offset {exc.pos}: {exc.msg}") from None
    if manifest.get("version") != TRACE_VERSION:
        raise FormatError(f"{mpath}: unsupported trace version {manifest.get('version')!r}")
    try:
        factor = Factor(manifest["factor"])
        layers = {}
        for entry in manifest["layers"]:
            shape = (int(entry["pairs"]), int(entry["channels"]))
            z1 = read_raw(path / entry["files"]["z1"], shape, "<f4")
            z2 = read_raw(path / entry["files"]["z2"], shape, "<f4")
            layers[entry["name"]] = (z1, z2)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{mpath}: bad manifest entry: {exc}") from None
    try:
        return ActivationTrace(factor, layers)
    except ValueError as exc:
        raise FormatError(f"{mpath}: {exc}") from None
