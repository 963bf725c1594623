"""Dataset directories: ``manifest.json`` plus one raw binary32 file per tensor."""

from __future__ import annotations

import json
from pathlib import Path

from ..formats import FormatError, read_raw, write_raw
from .video import TaskMode, Video, VideoSpec

DATASET_VERSION = 1


def export_dataset(videos: list[Video], path, task_mode: TaskMode | str,
                   spec: VideoSpec | None = None) -> Path:
    """Write ``videos`` under ``path``; returns the manifest path.

    Tensors are little-endian binary32 (masks: uint8), row-major, headerless.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    if not videos:
        raise ValueError("cannot export an empty dataset")
    t_len, h, w, c = videos[0].rgb.shape
    files = []
    for i, v in enumerate(videos):
        if v.rgb.shape != (t_len, h, w, c):
            raise ValueError(f"video {i} has shape {v.rgb.shape}, expected {(t_len, h, w, c)}")
        entry = {"video": f"{i}.f32"}
        write_raw(path / entry["video"], v.rgb, "<f4")
        if v.flow is not None:
            entry["flow"] = f"{i}.flow.f32"
            write_raw(path / entry["flow"], v.flow, "<f4")
        if v.mask is not None:
            entry["mask"] = f"{i}.mask.u8"
            write_raw(path / entry["mask"], v.mask, "u1")
        files.append(entry)
    manifest = {
        "version": DATASET_VERSION,
        "count": len(videos),
        "T": t_len, "H": h, "W": w, "C": c,
        "palettes": (spec or VideoSpec()).palettes,
        "task_mode": TaskMode(task_mode).value,
        "labels": [int(v.label) for v in videos],
        "factors": [v.factors for v in videos],
        "styles": [int(v.style) for v in videos],
        "files": files,
    }
    mpath = path / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return mpath


def _field(manifest: dict, key: str, mpath: Path):
    if key not in manifest:
        raise FormatError(f"{mpath}: manifest missing field {key!r}")
    return manifest[key]


def import_dataset(path) -> tuple[list[Video], TaskMode]:
    path = Path(path)
    mpath = path / "manifest.json"
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FormatError(f"{mpath}: no manifest") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mpath}: malformed manifest at byte offset {exc.pos}: {exc.msg}") from None
    if _field(manifest, "version", mpath) != DATASET_VERSION:
        raise FormatError(f"{mpath}: unsupported version {manifest['version']!r}")
    count = _field(manifest, "count", mpath)
    shape = tuple(int(_field(manifest, k, mpath)) for k in ("T", "H", "W", "C"))
    labels = _field(manifest, "labels", mpath)
    factors = _field(manifest, "factors", mpath)
    files = _field(manifest, "files", mpath)
    styles = manifest.get("styles", [0] * count)
    if not (len(labels) == len(factors) == len(files) == len(styles) == count):
        raise FormatError(f"{mpath}: count {count} disagrees with labels/factors/files lengths")
    task_mode = TaskMode(_field(manifest, "task_mode", mpath))
    videos = []
    for i in range(count):
        entry = files[i]
        rgb = read_raw(path / entry["video"], shape, "<f4")
        flow = read_raw(path / entry["flow"], shape[:3] + (2,), "<f4") if "flow" in entry else None
        mask = read_raw(path / entry["mask"], shape[:3], "u1") if "mask" in entry else None
        videos.append(Video(rgb=rgb, label=int(labels[i]), factors=factors[i], flow=flow,
                            mask=mask, style=int(styles[i])))
    return videos, task_mode
