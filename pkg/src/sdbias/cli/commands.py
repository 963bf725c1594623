"""Subcommand bodies. Each takes a resolved config and writes under ``<out>/<command>/``."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .. import interventions as I
from ..formats import FormatError
from ..modelzoo import (ArchitectureDescriptor, DropoutConfig, Kind, TrainConfig, build_model,
                        evaluate, load_checkpoint, save_checkpoint, shuffled, train)
from ..modelzoo.train import default_dropout_layer
from ..numerics import Rng
from ..pairgen import (Factor, TaskMode, VideoSpec, export_dataset, generate_dataset,
                       import_dataset, make_pairs, num_classes)
from ..probe import bias_report, center_bias, collect_trace, read_trace, write_trace
from ..probe.metrics import UNIT_CLASSES
from .config import ConfigError, config_hash, parse_arm
from .reports import read_json, write_csv, write_json

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- shared plumbing

def video_spec(cfg: dict) -> VideoSpec:
    d = cfg["dataset"]
    return VideoSpec(frames=d["frames"], height=d["height"], width=d["width"], palettes=d["palettes"])


def descriptor(cfg: dict) -> ArchitectureDescriptor:
    m, d = cfg["model"], cfg["dataset"]
    mode = TaskMode(d["task_mode"])
    try:
        return ArchitectureDescriptor(
            kind=m["kind"], widths=tuple(m["widths"]), cross_connection=m["cross_connection"],
            fusion=m["fusion"], head="segmenter" if mode is TaskMode.CAMOUFLAGE else "classifier",
            num_classes=num_classes(mode, video_spec(cfg)), se_reduction=m["se_reduction"])
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None


def fresh_model(cfg: dict, rng: Rng):
    d = cfg["dataset"]
    return build_model(descriptor(cfg), rng.child("init"),
                       video_shape=(d["frames"], d["height"], d["width"]))


def dropout_config(cfg: dict, kind: str | None = None, rate: float | None = None) -> DropoutConfig:
    d = cfg["train"]["dropout"]
    return DropoutConfig(kind=d["kind"] if kind is None else kind,
                         rate=d["rate"] if rate is None else rate,
                         layer=d["layer"], period=d["period"], warmup_epochs=d["warmup_epochs"])


def train_config(cfg: dict, epochs: int | None = None, **changes) -> TrainConfig:
    t = cfg["train"]
    base = dict(epochs=t["epochs"] if epochs is None else epochs, lr=float(t["lr"]),
                momentum=float(t["momentum"]), batch=t["batch"],
                checkpoint_every=t["checkpoint_every"], dropout=dropout_config(cfg),
                shuffle_frames=t["shuffle_frames"], key_frame=t["key_frame"])
    base.update(changes)
    return TrainConfig(**base)


def _two_stream(cfg: dict) -> bool:
    return cfg["model"]["kind"] == Kind.TWO_STREAM.value


def datasets(cfg: dict) -> tuple[list, list]:
    """Train and test clips: read from ``<out>/gen`` when present, else generated."""
    gen_dir = Path(cfg["out"]) / "gen"
    if (gen_dir / "dataset.json").exists():
        meta = read_json(gen_dir / "dataset.json")
        if meta.get("stage_hash") != config_hash(cfg, "dataset"):
            raise ConfigError(f"{gen_dir}: dataset was generated from a different config "
                              f"(hash {meta.get('stage_hash')}, expected {config_hash(cfg, 'dataset')})")
        return import_dataset(gen_dir / "train")[0], import_dataset(gen_dir / "test")[0]
    return _generate(cfg)


def _generate(cfg: dict) -> tuple[list, list]:
    d = cfg["dataset"]
    rng = Rng(cfg["seed"])
    spec = video_spec(cfg)
    try:
        tr = generate_dataset(d["task_mode"], d["n"], rng.child("train"), spec, styles=d["styles"])
        te = generate_dataset(d["task_mode"], d["test_n"], rng.child("test"), spec)
    except ValueError as exc:
        raise ConfigError(f"dataset: {exc}") from None
    return tr, te


def probe_pairs(cfg: dict, two_stream: bool) -> dict:
    d = cfg["dataset"]
    rng = Rng(cfg["seed"])
    vids = generate_dataset(d["task_mode"], cfg["probe"]["pairs"], rng.child("probe"), video_spec(cfg))
    return {f: make_pairs(vids, f, rng.child("pairs"), two_stream=two_stream) for f in Factor}


def _layers(cfg: dict, model) -> list[str]:
    layers = cfg["probe"]["layers"] or model.probe_layers
    unknown = [l for l in layers if l not in model.probe_layers]
    if unknown:
        raise ConfigError(f"probe.layers: unknown layers {unknown} (model has {model.probe_layers})")
    return list(layers)


def _out(cfg: dict, command: str) -> Path:
    path = Path(cfg["out"]) / command
    path.mkdir(parents=True, exist_ok=True)
    # the output path is left out so runs in different directories compare equal
    doc = {"config": {k: v for k, v in cfg.items() if k != "out"}, "config_hash": config_hash(cfg)}
    (path / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _ckpt_name(epoch: int) -> str:
    return f"ckpt_e{epoch:04d}"


# ---------------------------------------------------------------- gen

def cmd_gen(cfg: dict) -> dict:
    out = _out(cfg, "gen")
    tr, te = _generate(cfg)
    spec = video_spec(cfg)
    export_dataset(tr, out / "train", cfg["dataset"]["task_mode"], spec)
    export_dataset(te, out / "test", cfg["dataset"]["task_mode"], spec)
    payload = {"stage_hash": config_hash(cfg, "dataset"), "train": len(tr), "test": len(te)}
    write_json(out / "dataset.json", "dataset", payload, config_hash(cfg))
    return payload


# ---------------------------------------------------------------- train

def _resume_state(out: Path, stage_hash: str):
    index = out / "train.json"
    if not index.exists():
        return None
    meta = read_json(index)
    if meta.get("stage_hash") != stage_hash:
        raise ConfigError(f"{out}: refusing to resume a run made from a different config "
                          f"(hash {meta.get('stage_hash')}, expected {stage_hash})")
    if not meta.get("checkpoints"):
        return None
    return load_checkpoint(out / meta["checkpoints"][-1])


def cmd_train(cfg: dict) -> dict:
    out = _out(cfg, "train")
    stage = config_hash(cfg, "train")
    tr, te = datasets(cfg)
    rng = Rng(cfg["seed"])
    model = fresh_model(cfg, rng)
    names: list[str] = []
    start, velocity, iteration, probs = 0, None, 0, None
    last = _resume_state(out, stage) if cfg["train"]["resume"] else None
    if last is not None:
        model = last.restore()
        start, velocity = last.epoch, last.velocity
        iteration = int(last.meta.get("iteration", 0))
        probs = last.meta.get("static_probs")
        names = read_json(out / "train.json")["checkpoints"]

    def record(ckpt):
        ckpt.meta["stage_hash"] = stage
        name = _ckpt_name(ckpt.epoch)
        save_checkpoint(ckpt, out / name)
        if name not in names:
            names.append(name)
        write_json(out / "train.json", "train_index", {"stage_hash": stage, "checkpoints": names},
                   config_hash(cfg))

    remaining = cfg["train"]["epochs"] - start
    if last is None:
        train(model, tr, train_config(cfg), rng.child("fit"), on_checkpoint=record)
    elif remaining > 0:
        train(model, tr, train_config(cfg, epochs=remaining), rng.child("fit"), velocity,
                      start, iteration, probs, on_checkpoint=lambda c: record(c) if c.epoch > start else None)
    rows = []
    for name in names:
        ck = load_checkpoint(out / name)
        rows.append((ck.epoch, evaluate(ck.restore(), te, key_frame=cfg["train"]["key_frame"])))
    write_csv(out / "train_curve.csv", "train_curve", rows, config_hash(cfg))
    return {"checkpoints": names, "final_metric": rows[-1][1]}


def trained_checkpoints(cfg: dict, which: str = "all") -> list:
    tdir = Path(cfg["out"]) / "train"
    meta = read_json(tdir / "train.json")
    stage = config_hash(cfg, "train")
    if meta.get("stage_hash") != stage:
        raise ConfigError(f"{tdir}: checkpoints come from a different config "
                          f"(hash {meta.get('stage_hash')}, expected {stage})")
    names = meta["checkpoints"] if which == "all" else meta["checkpoints"][-1:]
    return [load_checkpoint(tdir / n) for n in names]


# ---------------------------------------------------------------- probe

def report_rows(reports) -> tuple[list, list, list]:
    lb, uc, us = [], [], []
    for rep in reports:
        ep = "" if rep.epoch is None else rep.epoch
        for name, lr in rep.layers.items():
            for f in lr.scores:
                lb.append((ep, name, f, lr.scores[f], lr.units[f], lr.units_two_factor.get(f, "")))
            for c in UNIT_CLASSES:
                uc.append((ep, name, c, lr.unit_counts[c]))
            for ch, ((s_s, s_d), cls) in enumerate(zip(lr.unit_scores, lr.unit_classes)):
                us.append((ep, name, ch, s_s, s_d, cls))
    return lb, uc, us


def cmd_probe(cfg: dict) -> dict:
    out = _out(cfg, "probe")
    p = cfg["probe"]
    reports = []
    if p["trace_dir"] is not None:
        traces = {f: read_trace(Path(p["trace_dir"]) / f.value) for f in Factor}
        layers = p["layers"] or list(traces[Factor.STATIC].layers)
        try:
            reports.append(bias_report(traces, layers, p["threshold"], p["reduce"]))
        except ValueError as exc:
            raise FormatError(f"{p['trace_dir']}: {exc}") from None
    else:
        ckpts = trained_checkpoints(cfg, p["epochs"])
        pairs = None
        for ck in ckpts:
            model = ck.restore()
            if pairs is None:
                pairs = probe_pairs(cfg, model.descriptor.kind is Kind.TWO_STREAM)
            layers = _layers(cfg, model)
            traces = {f: collect_trace(model, ps, layers, key_frame=cfg["train"]["key_frame"])
                      for f, ps in pairs.items()}
            if p["save_traces"]:
                for f, t in traces.items():
                    write_trace(t, out / "traces" / _ckpt_name(ck.epoch) / f.value)
            reports.append(bias_report(traces, layers, p["threshold"], p["reduce"], epoch=ck.epoch))
    h = config_hash(cfg)
    lb, uc, us = report_rows(reports)
    write_csv(out / "layer_bias.csv", "layer_bias", lb, h)
    write_csv(out / "unit_counts.csv", "unit_counts", uc, h)
    write_csv(out / "unit_scores.csv", "unit_scores", us, h)
    payload = {"reports": [r.to_dict() for r in reports]}
    if cfg["dataset"]["task_mode"] == TaskMode.CAMOUFLAGE.value and p["trace_dir"] is None:
        tr, _ = datasets(cfg)
        grid = center_bias([v.mask[cfg["train"]["key_frame"]] for v in tr])
        rows = [(r, c, float(grid[r, c])) for r in range(grid.shape[0]) for c in range(grid.shape[1])]
        write_csv(out / "center_bias.csv", "center_bias", rows, h)
    write_json(out / "report.json", "bias_report", payload, h)
    return payload


# ---------------------------------------------------------------- ablate

def removal_curves(cfg: dict, model, test, rng: Rng, layer: str | None = None) -> tuple[list, dict]:
    """Accuracy after removing k% of ``layer``'s channels under each configured mode."""
    layer = layer or cfg["ablate"]["layer"] or default_dropout_layer(model)
    if layer not in model.probe_layers:
        raise ConfigError(f"ablate.layer: unknown layer {layer!r}")
    pairs = probe_pairs(cfg, model.descriptor.kind is Kind.TWO_STREAM)
    kf = cfg["train"]["key_frame"]
    traces = {f: collect_trace(model, ps, [layer], key_frame=kf) for f, ps in pairs.items()}
    rep = bias_report(traces, [layer], cfg["probe"]["threshold"], cfg["probe"]["reduce"]).layers[layer]
    scores = np.asarray(rep.unit_scores)
    dom = Factor.STATIC if rep.scores["Static"] >= rep.scores["Dynamic"] else Factor.DYNAMIC
    dom_scores = scores[:, 0 if dom is Factor.STATIC else 1]
    n = scores.shape[0]
    base = evaluate(model, test, key_frame=kf)
    rows = []
    for mode in cfg["ablate"]["modes"]:
        for pct in cfg["ablate"]["k_percent"]:
            k = I.percent_count(pct, n)
            factor = ""
            if mode.startswith("TopBiased"):
                factor = mode.split(":")[1]
                chans = I.top_biased(scores[:, 0 if factor == "Static" else 1], k)
            elif mode == I.RANDOM_LEAST_BIASED:
                factor = dom.value
                chans = I.rank_random_least_biased(dom_scores, pct, rng.child(f"least/{pct}"))
            else:
                chans = I.pure_random(n, k, rng.child(f"random/{pct}"))
            acc = base if not chans else evaluate(
                I.remove_units(model, I.RemovalPlan(layer, chans, mode.split(":")[0], factor or None)),
                test, key_frame=kf)
            rows.append((mode.split(":")[0], factor, pct, len(chans), sorted(chans), acc))
    info = {"layer": layer, "baseline": base, "dominant": dom.value,
            "scores": {"Static": rep.scores["Static"], "Dynamic": rep.scores["Dynamic"]}}
    return rows, info


def cmd_ablate(cfg: dict) -> dict:
    out = _out(cfg, "ablate")
    model = trained_checkpoints(cfg, "last")[-1].restore()
    _, te = datasets(cfg)
    rows, info = removal_curves(cfg, model, te, Rng(cfg["seed"]).child("ablate"))
    h = config_hash(cfg)
    write_csv(out / "removal.csv", "removal", rows, h)
    payload = {**info, "rows": [list(r[:4]) + [list(r[4]), r[5]] for r in rows]}
    write_json(out / "removal.json", "removal", payload, h)
    return payload


# ---------------------------------------------------------------- shuffle experiment

def shuffle_experiment(cfg: dict) -> dict:
    tr, te = datasets(cfg)
    rng = Rng(cfg["seed"])
    ts = _two_stream(cfg)
    kf = cfg["train"]["key_frame"]
    normal = fresh_model(cfg, rng)
    train(normal, tr, train_config(cfg, shuffle_frames=False, checkpoint_every=0), rng.child("fit"))
    shuf = fresh_model(cfg, rng)
    train(shuf, tr, train_config(cfg, shuffle_frames=True, checkpoint_every=0), rng.child("fit"))
    a = evaluate(normal, te, key_frame=kf)
    b = evaluate(shuf, shuffled(te, rng.child("evshuf"), keep_flow=ts), key_frame=kf)
    chance = 1.0 / descriptor(cfg).num_classes
    return {"normal": a, "shuffled": b, "chance": chance,
            "relative_drop": (a - b) / a if a > 0 else 0.0}


def cmd_shuffle_exp(cfg: dict) -> dict:
    out = _out(cfg, "shuffle-exp")
    r = shuffle_experiment(cfg)
    rows = [("normal", "ordered", "ordered", r["normal"], r["chance"], 0.0),
            ("shuffled", "shuffled", "shuffled", r["shuffled"], r["chance"], r["relative_drop"])]
    h = config_hash(cfg)
    write_csv(out / "shuffle.csv", "shuffle", rows, h)
    write_json(out / "shuffle.json", "shuffle", r, h)
    return r


# ---------------------------------------------------------------- dose response

def train_arm(cfg: dict, arm: str, tr):
    """Fresh model trained under one dropout arm; returns (model, dropout layer)."""
    kind, rate = parse_arm(arm)
    rng = Rng(cfg["seed"])
    model = fresh_model(cfg, rng)
    dcfg = dropout_config(cfg, kind, rate)
    train(model, tr, train_config(cfg, checkpoint_every=0, dropout=dcfg, shuffle_frames=False),
          rng.child("fit"))
    return model, dcfg.layer or default_dropout_layer(model)


def measure_arm(cfg: dict, arm: str, model, layer: str, te, pairs) -> dict:
    """Accuracy, shuffled-eval accuracy and unit mix at ``layer``."""
    kind, rate = parse_arm(arm)
    rng = Rng(cfg["seed"])
    kf = cfg["train"]["key_frame"]
    acc = evaluate(model, te, key_frame=kf)
    sacc = evaluate(model, shuffled(te, rng.child("evshuf"), keep_flow=_two_stream(cfg)), key_frame=kf)
    traces = {f: collect_trace(model, ps, [layer], key_frame=kf) for f, ps in pairs.items()}
    rep = bias_report(traces, [layer], cfg["probe"]["threshold"], cfg["probe"]["reduce"]).layers[layer]
    c = rep.unit_counts
    return {"arm": arm, "kind": kind, "rate": rate, "layer": layer, "accuracy": acc,
            "shuffled_accuracy": sacc, "relative": sacc / acc if acc > 0 else 0.0,
            "counts": c, "dynamic_ratio": rep.dynamic_ratio}


def dose_arm(cfg: dict, arm: str, tr, te, pairs) -> dict:
    """Train one fresh model under ``arm`` and measure accuracy, shuffle drop and unit mix."""
    model, layer = train_arm(cfg, arm, tr)
    return measure_arm(cfg, arm, model, layer, te, pairs)


def cmd_dose_response(cfg: dict) -> dict:
    out = _out(cfg, "dose-response")
    tr, te = datasets(cfg)
    pairs = probe_pairs(cfg, _two_stream(cfg))
    results = [dose_arm(cfg, arm, tr, te, pairs) for arm in cfg["dose"]["arms"]]
    rows = [(r["arm"], r["kind"], r["rate"], r["accuracy"], r["shuffled_accuracy"], r["relative"],
             r["counts"]["Static"], r["counts"]["Dynamic"], r["counts"]["Joint"],
             r["counts"]["Residual"], r["dynamic_ratio"]) for r in results]
    h = config_hash(cfg)
    write_csv(out / "dose.csv", "dose", rows, h)
    write_json(out / "dose.json", "dose", {"arms": results}, h)
    return {"arms": results}


# ---------------------------------------------------------------- report

REPORT_SOURCES = {
    "gen": "dataset.json", "probe": "report.json", "ablate": "removal.json",
    "shuffle-exp": "shuffle.json", "dose-response": "dose.json",
}


def cmd_report(cfg: dict) -> dict:
    root = Path(cfg["out"])
    h = config_hash(cfg)
    sections = {}
    for command, fname in REPORT_SOURCES.items():
        path = root / command / fname
        if not path.exists():
            continue
        doc = read_json(path)
        if doc.get("config_hash") != h:
            raise ConfigError(f"{path}: produced by config {doc.get('config_hash')}, current config is {h}")
        sections[command] = {k: v for k, v in doc.items() if k not in ("schema", "schema_version", "config_hash")}
    tpath = root / "train" / "train.json"
    if tpath.exists():
        doc = read_json(tpath)
        if doc.get("stage_hash") != config_hash(cfg, "train"):
            raise ConfigError(f"{tpath}: checkpoints come from a different config")
        sections["train"] = {"checkpoints": doc["checkpoints"]}
    if not sections:
        raise FormatError(f"{root}: nothing to report")
    out = _out(cfg, "report")
    write_json(out / "summary.json", "summary", {"sections": sections}, h)
    return sections
