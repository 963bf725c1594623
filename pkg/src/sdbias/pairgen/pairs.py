"""Dataset sampling and the three factor-pair constructions."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..numerics import Rng
from .video import (
    DIRECTIONS,
    FLICKER_PERIODS,
    NUM_STYLES,
    SHAPES,
    SPEEDS,
    TEXTURES,
    TaskMode,
    Video,
    VideoSpec,
    apply_style,
    flow_analog,
    jitter_flow,
    render,
    render_camouflage,
)

ROTATION_RANGE_DEG = (30.0, 180.0)
SCALE_RANGE = (0.5, 2.0)


class Factor(str, Enum):
    STATIC = "Static"
    DYNAMIC = "Dynamic"
    IDENTICAL = "Identical"


@dataclass
class FactorPair:
    video_a: Video
    video_b: Video
    shared_factor: Factor
    provenance: dict = field(default_factory=dict)


def num_classes(task_mode: TaskMode | str, spec: VideoSpec = VideoSpec()) -> int:
    mode = TaskMode(task_mode)
    if mode is TaskMode.STATIC_ONLY:
        return spec.palettes
    if mode is TaskMode.DYNAMIC_ONLY:
        return DIRECTIONS
    if mode is TaskMode.MIXED:
        return spec.palettes * DIRECTIONS
    return 2


def label_for(factors: dict, task_mode: TaskMode | str) -> int:
    mode = TaskMode(task_mode)
    if mode is TaskMode.STATIC_ONLY:
        return int(factors["palette"])
    if mode is TaskMode.DYNAMIC_ONLY:
        return int(factors["direction"])
    if mode is TaskMode.MIXED:
        return int(factors["palette"]) * DIRECTIONS + int(factors["direction"])
    return 0


def sample_factors(rng: Rng, spec: VideoSpec, camouflage: bool = False) -> dict:
    return {
        "palette": int(rng.integers(spec.palettes)),
        "texture": int(rng.integers(TEXTURES)),
        "shape": int(rng.integers(SHAPES)),
        "direction": int(rng.integers(DIRECTIONS)),
        "speed": int(SPEEDS[rng.integers(len(SPEEDS))]),
        "flicker": 0 if camouflage else int(FLICKER_PERIODS[rng.integers(len(FLICKER_PERIODS))]),
        "start": [int(rng.integers(spec.height)), int(rng.integers(spec.width))],
    }


def make_video(factors: dict, spec: VideoSpec, rng: Rng, task_mode: TaskMode | str) -> Video:
    mode = TaskMode(task_mode)
    if mode is TaskMode.CAMOUFLAGE:
        rgb, mask = render_camouflage(factors, spec, rng)
    else:
        noise = rng.random((spec.height, spec.width))
        rgb, mask = render(factors, spec, noise)
    return Video(rgb=rgb, label=label_for(factors, mode), factors=factors,
                 flow=flow_analog(rgb), mask=mask)


def generate_dataset(task_mode: TaskMode | str, n: int, rng: Rng,
                     spec: VideoSpec = VideoSpec(), styles: int = 1) -> list[Video]:
    """Sample ``n`` videos; video ``i`` draws only from substream ``i``.

    StaticOnly labels the palette, DynamicOnly the motion direction, Mixed
    their product, and Camouflage carries a per-frame object mask instead of a
    class. With ``styles > 1`` each clip is rendered under a uniformly drawn
    style in ``range(styles)``; style 0 is the identity.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 1 <= styles <= NUM_STYLES:
        raise ValueError(f"styles must lie in [1, {NUM_STYLES}], got {styles}")
    mode = TaskMode(task_mode)
    out = []
    for i in range(n):
        sub = rng.child(f"video/{i}")
        factors = sample_factors(sub, spec, camouflage=mode is TaskMode.CAMOUFLAGE)
        v = make_video(factors, spec, sub, mode)
        if styles > 1:
            v = _styled(v, int(sub.child("style").integers(styles)))
        out.append(v)
    return out


def _styled(v: Video, style: int, frames: np.ndarray | None = None) -> Video:
    rgb = v.rgb if frames is None else v.rgb[frames]
    flow = v.flow
    if frames is not None:
        flow = flow_analog(rgb)
    mask = v.mask if frames is None or v.mask is None else v.mask[frames]
    return v.with_rgb(apply_style(rgb, style), style=style, flow=flow, mask=mask)


def _random_style(rng: Rng, styles: int) -> int:
    return int(rng.integers(styles))


def make_identical_pair(v: Video, rng: Rng, styles: int = NUM_STYLES) -> FactorPair:
    s = _random_style(rng, styles)
    a = _styled(v, s)
    b = a.with_rgb(a.rgb.copy())
    return FactorPair(a, b, Factor.IDENTICAL, {"style": s})


def random_nonidentity_permutation(rng: Rng, t_len: int) -> np.ndarray:
    if t_len < 2:
        raise ValueError("frame shuffling needs at least two frames")
    ident = np.arange(t_len)
    while True:
        perm = rng.permutation(t_len)
        if not np.array_equal(perm, ident):
            return perm


def make_static_pair(v: Video, rng: Rng, styles: int = NUM_STYLES,
                     permutation=None) -> FactorPair:
    """Same frames and style on both sides, time axis of side b shuffled."""
    t_len = v.rgb.shape[0]
    if t_len < 2:
        raise ValueError("a static pair needs T >= 2")
    s = _random_style(rng, styles)
    if permutation is None:
        perm = random_nonidentity_permutation(rng, t_len)
    else:
        perm = np.asarray(permutation, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(t_len)):
            raise ValueError("permutation must reorder all frames")
    a = _styled(v, s)
    if np.array_equal(perm, np.arange(t_len)):
        return FactorPair(a, a.with_rgb(a.rgb.copy()), Factor.IDENTICAL,
                          {"style": s, "permutation": perm.tolist()})
    b = _styled(v, s, frames=perm)
    return FactorPair(a, b, Factor.STATIC, {"style": s, "permutation": perm.tolist()})


def make_static_pair_flow(v: Video, rng: Rng, styles: int = NUM_STYLES,
                          rotation_deg: float | None = None, scale: float | None = None) -> FactorPair:
    """Two-stream static pair: same RGB and style, jittered flow on side b.

    A zero-flow clip cannot be jittered; the pair is still emitted and the
    ``zero_flow`` provenance flag is set.
    """
    if v.flow is None:
        raise ValueError("flow jitter needs a video with a flow analog")
    s = _random_style(rng, styles)
    rot = float(rng.uniform(*ROTATION_RANGE_DEG)) if rotation_deg is None else float(rotation_deg)
    sc = float(rng.uniform(*SCALE_RANGE)) if scale is None else float(scale)
    a = _styled(v, s)
    prov = {"style": s, "rotation_deg": rot, "scale": sc, "zero_flow": False}
    if not np.any(v.flow):
        prov["zero_flow"] = True
        warnings.warn("flow jitter on a zero-flow video leaves the flow unchanged", RuntimeWarning)
    if rot % 360.0 == 0.0 and sc == 1.0:
        return FactorPair(a, a.with_rgb(a.rgb.copy(), flow=v.flow.copy()), Factor.IDENTICAL, prov)
    b = a.with_rgb(a.rgb.copy(), flow=jitter_flow(v.flow, rot, sc))
    return FactorPair(a, b, Factor.STATIC, prov)


def make_dynamic_pair(v: Video, rng: Rng, styles: int = NUM_STYLES,
                      style_pair: tuple[int, int] | None = None) -> FactorPair:
    """Same clip under two different styles; frame order and flow untouched."""
    if styles < 2:
        raise ValueError("a dynamic pair needs at least two styles")
    if style_pair is None:
        s1 = _random_style(rng, styles)
        s2 = int((s1 + 1 + rng.integers(styles - 1)) % styles)
    else:
        s1, s2 = (int(s) for s in style_pair)
    a = _styled(v, s1)
    b = _styled(v, s2)
    factor = Factor.IDENTICAL if s1 == s2 else Factor.DYNAMIC
    return FactorPair(a, b, factor, {"styles": [s1, s2]})


_MAKERS = {
    Factor.STATIC: make_static_pair,
    Factor.DYNAMIC: make_dynamic_pair,
    Factor.IDENTICAL: make_identical_pair,
}


def make_pairs(videos: list[Video], factor: Factor | str, rng: Rng,
               two_stream: bool = False) -> list[FactorPair]:
    """One pair per video; pair ``i`` draws from substream ``i``."""
    factor = Factor(factor)
    maker = make_static_pair_flow if (two_stream and factor is Factor.STATIC) else _MAKERS[factor]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return [maker(v, rng.child(f"pair/{factor.value}/{i}")) for i, v in enumerate(videos)]
