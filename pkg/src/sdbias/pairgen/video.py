"""Procedural videos with independently controllable static and dynamic factors.

Static factors (palette, texture, shape) fix what any single frame looks like;
dynamic factors (direction, speed, flicker) fix how frames relate to each
other. Objects move on a torus so every frame keeps the whole object visible.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from ..numerics import Rng

DIRECTIONS = 8
SPEEDS = (1, 2)
FLICKER_PERIODS = (0, 2, 4)
TEXTURES = 4
SHAPES = 2
OBJECT_SIZE = 6
# (dy, dx) unit steps for the eight compass bins, counter-clockwise from east
_STEPS = ((0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1))


class TaskMode(str, Enum):
    STATIC_ONLY = "StaticOnly"
    DYNAMIC_ONLY = "DynamicOnly"
    MIXED = "Mixed"
    CAMOUFLAGE = "Camouflage"


@dataclass(frozen=True)
class VideoSpec:
    frames: int = 8
    height: int = 16
    width: int = 16
    channels: int = 3
    palettes: int = 4

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.frames, self.height, self.width, self.channels)


@dataclass
class Video:
    """One clip: ``rgb`` is (T, H, W, 3) float32 in [0, 1].

    ``flow`` is the (T, H, W, 2) flow analog of the unstyled content; ``mask``
    is the (T, H, W) uint8 object mask for segmentation tasks.
    """

    rgb: np.ndarray
    label: int = 0
    factors: dict = field(default_factory=dict)
    flow: np.ndarray | None = None
    mask: np.ndarray | None = None
    style: int = 0

    def with_rgb(self, rgb: np.ndarray, **changes) -> Video:
        return replace(self, rgb=rgb, **changes)


# ---------------------------------------------------------------- styles

def _circulant(a, b, c):
    return np.array([[a, b, c], [c, a, b], [b, c, a]], dtype=np.float64)


_PERM = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=np.float64)

# Every map sends the unit colour cube into itself, so clamping never binds.
STYLE_MATRICES = (
    np.eye(3),
    -_PERM,
    0.7 * _circulant(0.6, 0.1, 0.3),
    -0.8 * _circulant(0.2, 0.7, 0.1) @ _PERM.T,
)
STYLE_OFFSETS = (
    np.zeros(3),
    np.ones(3),
    np.full(3, 0.15),
    np.full(3, 0.9),
)
NUM_STYLES = len(STYLE_MATRICES)


def apply_style(rgb: np.ndarray, style: int) -> np.ndarray:
    """Apply the fixed per-pixel colour map ``style`` to every pixel of ``rgb``."""
    if not 0 <= style < NUM_STYLES:
        raise ValueError(f"style must be in [0, {NUM_STYLES}), got {style}")
    if style == 0:
        return np.array(rgb, dtype=np.float32, copy=True)
    m = STYLE_MATRICES[style].astype(np.float32)
    o = STYLE_OFFSETS[style].astype(np.float32)
    out = np.asarray(rgb, dtype=np.float32) @ m.T + o
    return np.clip(out, 0.0, 1.0)


def invert_style(rgb: np.ndarray, style: int) -> np.ndarray:
    m = STYLE_MATRICES[style]
    return (np.asarray(rgb, dtype=np.float64) - STYLE_OFFSETS[style]) @ np.linalg.inv(m).T


# ---------------------------------------------------------------- rendering

def palette_colors(palette: int, palettes: int) -> np.ndarray:
    """(4, 3) colours: background dark/light, object dark/light."""
    hue = palette / palettes
    bg_hue = (hue + 0.5) % 1.0
    cols = [
        colorsys.hsv_to_rgb(bg_hue, 0.5, 0.35),
        colorsys.hsv_to_rgb(bg_hue, 0.4, 0.55),
        colorsys.hsv_to_rgb(hue, 0.9, 0.65),
        colorsys.hsv_to_rgb(hue, 0.7, 0.95),
    ]
    return np.array(cols, dtype=np.float64)


def _texture(tex: int, yy: np.ndarray, xx: np.ndarray, noise: np.ndarray) -> np.ndarray:
    if tex == 0:
        return ((yy // 2) % 2).astype(np.float64)
    if tex == 1:
        return ((xx // 2) % 2).astype(np.float64)
    if tex == 2:
        return ((yy + xx) % 2).astype(np.float64)
    return noise[yy % noise.shape[0], xx % noise.shape[1]]


def _shape_mask(shape: int, size: int = OBJECT_SIZE) -> np.ndarray:
    if shape == 0:
        return np.ones((size, size), dtype=bool)
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    return ((yy - c) ** 2 + (xx - c) ** 2) <= (size / 2.0) ** 2


def trajectory(direction: int, speed: int, start: tuple[int, int], frames: int, hw: tuple[int, int]):
    dy, dx = _STEPS[direction]
    t = np.arange(frames)
    return (start[0] + dy * speed * t) % hw[0], (start[1] + dx * speed * t) % hw[1]


def render(factors: dict, spec: VideoSpec, noise: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Render (rgb, mask) for one clip from its factor record."""
    t_len, h, w = spec.frames, spec.height, spec.width
    cols = palette_colors(factors["palette"], spec.palettes)
    yy, xx = np.mgrid[0:h, 0:w]
    bg_pat = _texture(factors["texture"], yy, xx, noise)
    bg = cols[0] + bg_pat[..., None] * (cols[1] - cols[0])
    shp = _shape_mask(factors["shape"])
    ys, xs = trajectory(factors["direction"], factors["speed"], factors["start"], t_len, (h, w))
    period = factors["flicker"]
    rgb = np.empty((t_len, h, w, 3), dtype=np.float64)
    mask = np.zeros((t_len, h, w), dtype=np.uint8)
    for t in range(t_len):
        ly = (yy - ys[t]) % h
        lx = (xx - xs[t]) % w
        inside = (ly < OBJECT_SIZE) & (lx < OBJECT_SIZE)
        inside[inside] = shp[ly[inside], lx[inside]]
        obj_pat = _texture(factors["texture"], ly, lx, noise[::-1])
        obj = cols[2] + obj_pat[..., None] * (cols[3] - cols[2])
        if period and (t % period) >= period // 2:
            obj = obj * 0.5
        rgb[t] = np.where(inside[..., None], obj, bg)
        mask[t] = inside
    return rgb.astype(np.float32), mask


def render_camouflage(factors: dict, spec: VideoSpec, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Object and background drawn from one noise process: only motion reveals the object."""
    t_len, h, w = spec.frames, spec.height, spec.width
    cols = palette_colors(factors["palette"], spec.palettes)
    bg_noise = rng.random((h, w))
    obj_noise = rng.random((OBJECT_SIZE, OBJECT_SIZE))
    yy, xx = np.mgrid[0:h, 0:w]
    shp = _shape_mask(factors["shape"])
    ys, xs = trajectory(factors["direction"], factors["speed"], factors["start"], t_len, (h, w))
    rgb = np.empty((t_len, h, w, 3), dtype=np.float64)
    mask = np.zeros((t_len, h, w), dtype=np.uint8)
    for t in range(t_len):
        ly = (yy - ys[t]) % h
        lx = (xx - xs[t]) % w
        inside = (ly < OBJECT_SIZE) & (lx < OBJECT_SIZE)
        inside[inside] = shp[ly[inside], lx[inside]]
        level = np.where(inside, obj_noise[ly % OBJECT_SIZE, lx % OBJECT_SIZE], bg_noise)
        rgb[t] = cols[0] + level[..., None] * (cols[1] - cols[0])
        mask[t] = inside
    return rgb.astype(np.float32), mask


# ---------------------------------------------------------------- flow analog

_FLOW_EPS = 1e-2


def flow_analog(rgb: np.ndarray) -> np.ndarray:
    """Normal-flow estimate from forward frame differences, (T, H, W, 2) as (u, v).

    u points along +x (columns), v along +y (rows). The last frame has no
    successor and carries zero flow; a motionless, non-flickering clip gives
    zero everywhere.
    """
    g = np.asarray(rgb, dtype=np.float64).mean(axis=-1)
    t_len = g.shape[0]
    flow = np.zeros(g.shape + (2,), dtype=np.float64)
    for t in range(t_len - 1):
        it = g[t + 1] - g[t]
        gy, gx = np.gradient(0.5 * (g[t] + g[t + 1]))
        denom = gx * gx + gy * gy + _FLOW_EPS
        flow[t, ..., 0] = -it * gx / denom
        flow[t, ..., 1] = -it * gy / denom
    return flow.astype(np.float32)


def _exact_trig(deg: float) -> tuple[float, float]:
    c, s = np.cos(np.deg2rad(deg)), np.sin(np.deg2rad(deg))
    snap = lambda v: float(np.round(v)) if abs(v - np.round(v)) < 1e-12 else float(v)  # noqa: E731
    return snap(c), snap(s)


def jitter_flow(flow: np.ndarray, rotation_deg: float, scale: float) -> np.ndarray:
    """Rotate flow vectors by ``rotation_deg`` (counter-clockwise) and scale them."""
    c, s = _exact_trig(rotation_deg)
    u = flow[..., 0].astype(np.float64)
    v = flow[..., 1].astype(np.float64)
    out = np.stack([scale * (c * u - s * v), scale * (s * u + c * v)], axis=-1)
    return out.astype(np.float32)
