"""Versioned CSV and JSON report files; every file carries the config hash."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from ..formats import FormatError

# column layouts are part of the file format; bump the version on any change
SCHEMAS = {
    "train_curve": (1, ["epoch", "test_metric"]),
    "layer_bias": (1, ["epoch", "layer", "factor", "score", "units", "units_two_factor"]),
    "unit_counts": (1, ["epoch", "layer", "unit_class", "count"]),
    "unit_scores": (1, ["epoch", "layer", "channel", "static_score", "dynamic_score", "unit_class"]),
    "center_bias": (1, ["row", "col", "value"]),
    "removal": (1, ["mode", "factor", "k_percent", "k", "channels", "accuracy"]),
    "shuffle": (1, ["arm", "train_order", "eval_order", "accuracy", "chance", "relative_drop"]),
    "dose": (1, ["arm", "kind", "rate", "accuracy", "shuffled_accuracy", "relative", "static_units",
                 "dynamic_units", "joint_units", "residual_units", "dynamic_ratio"]),
}
JSON_SCHEMA_VERSION = 1


def fmt(value) -> str:
    """Shortest round-trip text for floats; plain str otherwise."""
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            return str(value)
        return repr(value)
    if isinstance(value, (list, tuple)):
        return " ".join(fmt(v) for v in value)
    return str(value)


def write_csv(path, schema: str, rows, cfg_hash: str) -> Path:
    version, columns = SCHEMAS[schema]
    buf = io.StringIO()
    buf.write(f"# schema={schema} version={version}\n")
    buf.write(f"# config_hash={cfg_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"{schema}: row {row!r} does not have {len(columns)} columns")
        w.writerow([fmt(v) for v in row])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def read_csv(path) -> tuple[dict, list[dict]]:
    """Returns (header fields, rows as dicts of strings)."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise FormatError(f"{path}: missing report") from None
    header = {}
    body = []
    for line in lines:
        if line.startswith("# "):
            for part in line[2:].split():
                k, _, v = part.partition("=")
                header[k] = v
        else:
            body.append(line)
    if "schema" not in header or "config_hash" not in header:
        raise FormatError(f"{path}: missing schema or config_hash header")
    schema = header["schema"]
    if schema not in SCHEMAS or int(header.get("version", -1)) != SCHEMAS[schema][0]:
        raise FormatError(f"{path}: unsupported schema {schema} version {header.get('version')}")
    rows = list(csv.DictReader(body))
    if body and next(csv.reader(body[:1])) != SCHEMAS[schema][1]:
        raise FormatError(f"{path}: column header does not match schema {schema}")
    return header, rows


def write_json(path, kind: str, payload: dict, cfg_hash: str) -> Path:
    doc = {"schema": kind, "schema_version": JSON_SCHEMA_VERSION, "config_hash": cfg_hash, **payload}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return path


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FormatError(f"{path}: missing report") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed JSON at byte offset {exc.pos}: {exc.msg}") from None
