"""Strict JSON experiment configs: defaults, validation, dotted overrides, hashing."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """An experiment config is malformed, has unknown keys, or does not match prior outputs."""


DEFAULTS: dict = {
    "version": CONFIG_VERSION,
    "seed": 0,
    "out": "runs/default",
    "dataset": {
        "task_mode": "DynamicOnly",
        "n": 2000,
        "test_n": 400,
        "frames": 8,
        "height": 16,
        "width": 16,
        "palettes": 4,
        "styles": 1,
    },
    "model": {
        "kind": "SingleStream3D",
        "widths": [8, 16],
        "cross_connection": "None",
        "fusion": "Gated",
        "se_reduction": 2,
    },
    "train": {
        "epochs": 10,
        "lr": 0.1,
        "momentum": 0.9,
        "batch": 32,
        "checkpoint_every": 1,
        "key_frame": 0,
        "shuffle_frames": False,
        "resume": False,
        "dropout": {"kind": "none", "rate": 0.0, "layer": None, "period": 30, "warmup_epochs": 0},
    },
    "probe": {
        "threshold": 0.5,
        "pairs": 200,
        "layers": None,
        "reduce": "mean",
        "epochs": "all",
        "trace_dir": None,
        "save_traces": False,
    },
    "ablate": {
        "layer": None,
        "k_percent": [0, 10, 20, 30, 40, 50],
        "modes": ["TopBiased:Static", "TopBiased:Dynamic", "RandomLeastBiased", "PureRandom"],
    },
    "dose": {
        "arms": ["none", "standard:0.5", "static:0.1", "static:0.3", "static:0.5", "static:0.7"],
    },
}

# allowed types for every leaf; keys whose default is None need an explicit entry
_NUM = (int, float)
TYPES: dict = {
    "version": int, "seed": int, "out": str,
    "dataset.task_mode": str, "dataset.n": int, "dataset.test_n": int, "dataset.frames": int,
    "dataset.height": int, "dataset.width": int, "dataset.palettes": int, "dataset.styles": int,
    "model.kind": str, "model.widths": list, "model.cross_connection": str, "model.fusion": str,
    "model.se_reduction": int,
    "train.epochs": int, "train.lr": _NUM, "train.momentum": _NUM, "train.batch": int,
    "train.checkpoint_every": int, "train.key_frame": int, "train.shuffle_frames": bool,
    "train.resume": bool, "train.dropout.kind": str, "train.dropout.rate": _NUM,
    "train.dropout.layer": (str, type(None)), "train.dropout.period": int,
    "train.dropout.warmup_epochs": int,
    "probe.threshold": _NUM, "probe.pairs": int, "probe.layers": (list, type(None)),
    "probe.reduce": str, "probe.epochs": str, "probe.trace_dir": (str, type(None)),
    "probe.save_traces": bool,
    "ablate.layer": (str, type(None)), "ablate.k_percent": list, "ablate.modes": list,
    "dose.arms": list,
}

CHOICES = {
    "dataset.task_mode": ("StaticOnly", "DynamicOnly", "Mixed", "Camouflage"),
    "model.kind": ("SingleStream3D", "TwoStream"),
    "model.cross_connection": ("None", "MotionToAppearance", "Bidirectional"),
    "model.fusion": ("Gated", "ConvexCombinationGated"),
    "train.dropout.kind": ("none", "standard", "static"),
    "probe.reduce": ("mean", "mean_all", "sum"),
    "probe.epochs": ("all", "last"),
}

# sections that determine each stage's artifacts
STAGES = {
    "dataset": ("seed", "dataset"),
    "train": ("seed", "dataset", "model", "train"),
}


def _check(node, default, path: str) -> None:
    if isinstance(default, dict):
        if not isinstance(node, dict):
            raise ConfigError(f"{path or '<root>'}: expected an object, got {type(node).__name__}")
        for key in node:
            if key not in default:
                where = f"{path}.{key}" if path else key
                raise ConfigError(f"{where}: unknown key")
        for key, sub in default.items():
            _check(node[key], sub, f"{path}.{key}" if path else key)
        return
    types = TYPES[path]
    # bool is an int subclass; keep the two apart
    if isinstance(node, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"{path}: expected {_type_name(types)}, got bool")
    if not isinstance(node, types):
        raise ConfigError(f"{path}: expected {_type_name(types)}, got {type(node).__name__}")
    if path in CHOICES and node not in CHOICES[path]:
        raise ConfigError(f"{path}: {node!r} is not one of {list(CHOICES[path])}")


def _type_name(types) -> str:
    types = types if isinstance(types, tuple) else (types,)
    return " or ".join("null" if t is type(None) else t.__name__ for t in types)


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"{where}: unknown key")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where}: expected an object, got {type(val).__name__}")
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = val
    return out


def _semantic(cfg: dict) -> None:
    d, t, p = cfg["dataset"], cfg["train"], cfg["probe"]
    if cfg["version"] != CONFIG_VERSION:
        raise ConfigError(f"version: unsupported config version {cfg['version']}")
    if not 0 <= cfg["seed"] < 2**64:
        raise ConfigError("seed: must fit in 64 unsigned bits")
    for key in ("n", "test_n", "frames", "height", "width", "palettes", "styles"):
        if d[key] < 1:
            raise ConfigError(f"dataset.{key}: must be positive")
    if d["frames"] < 2:
        raise ConfigError("dataset.frames: frame shuffling needs at least two frames")
    if not all(isinstance(w, int) and not isinstance(w, bool) and w > 0 for w in cfg["model"]["widths"]):
        raise ConfigError("model.widths: expected a list of positive integers")
    if not cfg["model"]["widths"]:
        raise ConfigError("model.widths: at least one block is required")
    if t["epochs"] < 0 or t["batch"] < 1 or t["checkpoint_every"] < 0 or t["lr"] < 0:
        raise ConfigError("train: epochs, lr and checkpoint_every must be >= 0 and batch >= 1")
    if not 0 <= t["key_frame"] < d["frames"]:
        raise ConfigError("train.key_frame: outside the clip")
    if not 0.0 <= t["dropout"]["rate"] < 1.0:
        raise ConfigError("train.dropout.rate: must lie in [0, 1)")
    if t["dropout"]["period"] < 1 or t["dropout"]["warmup_epochs"] < 0:
        raise ConfigError("train.dropout: period must be >= 1 and warmup_epochs >= 0")
    if not 0.0 < p["threshold"] < 1.0:
        raise ConfigError("probe.threshold: must lie in (0, 1)")
    if p["pairs"] < 2:
        raise ConfigError("probe.pairs: a trace needs at least two pairs")
    for k in cfg["ablate"]["k_percent"]:
        if isinstance(k, bool) or not isinstance(k, _NUM) or not 0 <= k <= 100:
            raise ConfigError(f"ablate.k_percent: {k!r} is not a percentage")
    for mode in cfg["ablate"]["modes"]:
        if mode not in ("TopBiased:Static", "TopBiased:Dynamic", "RandomLeastBiased", "PureRandom"):
            raise ConfigError(f"ablate.modes: unknown mode {mode!r}")
    for arm in cfg["dose"]["arms"]:
        try:
            parse_arm(arm)
        except ValueError as exc:
            raise ConfigError(f"dose.arms: {exc}") from None


def parse_arm(arm) -> tuple[str, float]:
    """``"none"``, ``"standard:0.5"`` or ``"static:0.3"`` -> (kind, rate)."""
    if not isinstance(arm, str):
        raise ValueError(f"arm {arm!r} is not a string")
    if arm == "none":
        return "none", 0.0
    kind, _, rate = arm.partition(":")
    if kind not in ("standard", "static"):
        raise ValueError(f"unknown arm {arm!r}")
    try:
        r = float(rate)
    except ValueError:
        raise ValueError(f"arm {arm!r} has no numeric rate") from None
    if not 0.0 <= r < 1.0:
        raise ValueError(f"arm {arm!r} rate must lie in [0, 1)")
    return kind, r


def parse_override(item: str) -> tuple[list[str], object]:
    """``a.b.c=value``; the value is read as JSON, falling back to a bare string."""
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set {item!r}: expected key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_override(cfg: dict, keys: list[str], value) -> None:
    node, default = cfg, DEFAULTS
    for i, key in enumerate(keys):
        where = ".".join(keys[:i + 1])
        if not isinstance(default, dict) or key not in default:
            raise ConfigError(f"{where}: unknown key")
        if i == len(keys) - 1:
            if isinstance(default[key], dict):
                raise ConfigError(f"{where}: cannot replace a whole section with --set")
            node[key] = value
        else:
            node, default = node[key], default[key]


def load_config(path=None, overrides=(), seed=None, out=None) -> dict:
    """Defaults, then the file at ``path``, then ``--set`` overrides, then --seed/--out."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON at byte offset {exc.pos}: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: the config must be a JSON object")
        cfg = _merge(cfg, doc)
    for item in overrides:
        apply_override(cfg, *parse_override(item))
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["out"] = str(out)
    _check(cfg, DEFAULTS, "")
    _semantic(cfg)
    return cfg


def canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def config_hash(cfg: dict, stage: str | None = None) -> str:
    """Hex digest of the config. A stage hashes only its sections.

    ``out`` and ``train.resume`` never count: neither changes any result.
    """
    keys = STAGES[stage] if stage else sorted(k for k in cfg if k != "out")
    doc = copy.deepcopy({k: cfg[k] for k in keys})
    if "train" in doc:
        doc["train"].pop("resume", None)
    return hashlib.sha256(canonical(doc)).hexdigest()[:16]
