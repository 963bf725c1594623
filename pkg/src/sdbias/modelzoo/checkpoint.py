"""Checkpoint files: a JSON manifest plus a binary32 parameter blob.

The blob starts with the 8-byte magic ``SDCK0001``, followed by every
parameter and then every momentum buffer, little-endian binary32, row-major,
in declaration order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..formats import FormatError
from .models import ArchitectureDescriptor, ModelCheckpoint, build_model

MAGIC = b"SDCK0001"
CHECKPOINT_VERSION = 1


def _paths(path) -> tuple[Path, Path]:
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".json", ".bin") else path
    return stem.with_suffix(".json"), stem.with_suffix(".bin")


def _param_order(descriptor: ArchitectureDescriptor, video_shape) -> list[str]:
    return list(build_model(descriptor, video_shape=video_shape).params)


def save_checkpoint(ckpt: ModelCheckpoint, path) -> Path:
    """Write ``<stem>.json`` and ``<stem>.bin``; returns the manifest path."""
    mpath, bpath = _paths(path)
    order = _param_order(ckpt.descriptor, ckpt.video_shape)
    if list(ckpt.params) != order:
        raise ValueError("checkpoint parameters are not in declaration order")
    tensors = [ckpt.params[k] for k in order]
    if ckpt.velocity:
        tensors += [ckpt.velocity[k] for k in order]
    for t in tensors:
        if t.dtype != np.float32:
            raise ValueError(f"checkpoint blobs hold binary32 only; got {t.dtype}")
    blob = MAGIC + b"".join(np.ascontiguousarray(t, dtype="<f4").tobytes() for t in tensors)
    manifest = {
        "version": CHECKPOINT_VERSION,
        "descriptor": ckpt.descriptor.to_dict(),
        "epoch": int(ckpt.epoch),
        "video_shape": [int(v) for v in ckpt.video_shape],
        "seeds": ckpt.meta,
        "rng_state": ckpt.rng_state,
        "params": [{"name": k, "shape": list(ckpt.params[k].shape)} for k in order],
        "has_velocity": bool(ckpt.velocity),
        "masks": {k: [float(x) for x in v] for k, v in sorted(ckpt.masks.items())},
        "blob": bpath.name,
        "blob_bytes": len(blob),
    }
    mpath.parent.mkdir(parents=True, exist_ok=True)
    bpath.write_bytes(blob)
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return mpath


def load_checkpoint(path) -> ModelCheckpoint:
    mpath, _ = _paths(path)
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FormatError(f"{mpath}: no checkpoint manifest") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mpath}: malformed manifest at byte offset {exc.pos}: {exc.msg}") from None
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{mpath}: unsupported checkpoint version {manifest.get('version')!r}")
    try:
        descriptor = ArchitectureDescriptor.from_dict(manifest["descriptor"])
        video_shape = tuple(int(v) for v in manifest["video_shape"])
        entries = [(e["name"], tuple(int(s) for s in e["shape"])) for e in manifest["params"]]
        bpath = mpath.parent / manifest["blob"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{mpath}: bad manifest entry: {exc}") from None
    if [n for n, _ in entries] != _param_order(descriptor, video_shape):
        raise FormatError(f"{mpath}: parameter list does not match the descriptor")
    try:
        raw = bpath.read_bytes()
    except FileNotFoundError:
        raise FormatError(f"{bpath}: missing parameter blob") from None
    if raw[:len(MAGIC)] != MAGIC:
        raise FormatError(f"{bpath}: bad magic at byte offset 0")
    sizes = [int(np.prod(s)) for _, s in entries]
    copies = 2 if manifest.get("has_velocity") else 1
    expected = len(MAGIC) + 4 * sum(sizes) * copies
    if len(raw) < expected:
        raise FormatError(f"{bpath}: truncated at byte offset {len(raw)}, expected {expected} bytes")
    if len(raw) > expected:
        raise FormatError(f"{bpath}: trailing data at byte offset {expected}")
    flat = np.frombuffer(raw, dtype="<f4", offset=len(MAGIC)).astype(np.float32)
    tensors, pos = [], 0
    for _ in range(copies):
        for (_, shape), size in zip(entries, sizes):
            tensors.append(flat[pos:pos + size].reshape(shape).copy())
            pos += size
    names = [n for n, _ in entries]
    params = dict(zip(names, tensors[:len(names)]))
    velocity = dict(zip(names, tensors[len(names):]))
    masks = {k: np.asarray(v, dtype=np.float32) for k, v in manifest.get("masks", {}).items()}
    return ModelCheckpoint(descriptor, params, velocity, int(manifest["epoch"]),
                           manifest.get("rng_state"), manifest.get("seeds", {}), video_shape, masks)
