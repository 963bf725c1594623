"""A hand-built oracle network whose 16 probe channels have known roles.

Channels 0-3 are static (clip-mean colour projections, blind to frame order),
4-7 are dynamic (velocity read off the correlation of successive frame
differences, blind to colour maps), 8-11 are joint (a static channel plus a
motion-energy channel) and 12-15 are dead. A fixed direction head reads the
two velocity channels, so removing them breaks DynamicOnly classification
while removing the static channels does not.
"""

from __future__ import annotations

import numpy as np

from .modelzoo.models import ArchitectureDescriptor, Model, _ParamSpec
from .numerics import Rng
from .pairgen.pairs import generate_dataset
from .pairgen.video import _STEPS, NUM_STYLES, TaskMode

LAYER = "planted"
STATIC_CHANNELS = (0, 1, 2, 3)
DYNAMIC_CHANNELS = (4, 5, 6, 7)
JOINT_CHANNELS = (8, 9, 10, 11)
DEAD_CHANNELS = (12, 13, 14, 15)
WIDTH = 16
# share of the joint channel's variance taken by its static part
JOINT_STATIC_WEIGHT = 0.25


def planted_roles() -> list[str]:
    """Expected unit class of every channel, in channel order."""
    roles = [""] * WIDTH
    for idx, name in ((STATIC_CHANNELS, "Static"), (DYNAMIC_CHANNELS, "Dynamic"),
                      (JOINT_CHANNELS, "Joint"), (DEAD_CHANNELS, "Residual")):
        for c in idx:
            roles[c] = name
    return roles


def colour_features(x: np.ndarray) -> np.ndarray:
    """(B, 4) clip means of R, G, B and R - B."""
    m = x.mean(axis=(1, 2, 3))
    return np.concatenate([m, m[:, :1] - m[:, 2:3]], axis=1)


def velocity(x: np.ndarray) -> np.ndarray:
    """(B, 2) mean (vy, vx) displacement per clip.

    Successive luminance differences d_t and d_{t+1} of a translating object
    are shifted copies of each other; the peak of their circular
    cross-correlation sits at the per-frame displacement. Peaks are read per
    step and averaged, so a flicker step spoils only its own estimate.
    """
    lum = x.astype(np.float64).mean(axis=-1)
    d = np.diff(lum, axis=1)
    d -= d.mean(axis=(2, 3), keepdims=True)
    f = np.fft.fft2(d)
    surf = np.real(np.fft.ifft2(np.conj(f[:, :-1]) * f[:, 1:]))
    b, t, h, w = surf.shape
    iy, ix = np.unravel_index(surf.reshape(b, t, -1).argmax(axis=2), (h, w))
    vy = (iy + h // 2) % h - h // 2
    vx = (ix + w // 2) % w - w // 2
    return np.stack([vy.mean(axis=1), vx.mean(axis=1)], axis=1)


def motion_energy(x: np.ndarray) -> np.ndarray:
    """(B,) fraction of pixels whose frame-to-frame change exceeds half the frame's spread."""
    x = x.astype(np.float64)
    d = np.abs(np.diff(x, axis=1)).sum(axis=-1)
    spread = x.std(axis=(2, 3)).sum(axis=-1)[:, 1:, None, None]
    return (d > 0.5 * spread).mean(axis=(1, 2, 3))


def raw_features(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    v = velocity(x)
    dyn = np.stack([v[:, 0], v[:, 1], v[:, 0] + v[:, 1], v[:, 0] - v[:, 1]], axis=1)
    return colour_features(np.asarray(x, dtype=np.float64)), dyn, motion_energy(x)


class PlantedNetwork(Model):
    """Oracle network: a single probe layer ``planted`` and a fixed direction head.

    ``params`` hold the per-channel centring and scaling constants fitted on a
    calibration set; nothing is trained. There is no backward pass.
    """

    def __init__(self, calibration=None, input_shape=(8, 16, 16), dtype=np.float64):
        descriptor = ArchitectureDescriptor(num_classes=len(_STEPS))
        self.input_shape = tuple(input_shape)
        super().__init__(descriptor, None, dtype)
        if calibration is None:
            calibration = generate_dataset(TaskMode.MIXED, 256, Rng(0, "planted-calibration"),
                                           styles=NUM_STYLES)
        self.calibrate(np.stack([v.rgb for v in calibration]))

    def _param_specs(self):
        return {
            "static_mu": _ParamSpec((4,)), "static_sd": _ParamSpec((4,)),
            "dyn_sd": _ParamSpec((4,)), "energy_mu": _ParamSpec((1,)), "energy_sd": _ParamSpec((1,)),
        }

    def calibrate(self, x: np.ndarray) -> None:
        s, d, e = raw_features(x)
        self.params["static_mu"] = s.mean(axis=0)
        self.params["static_sd"] = s.std(axis=0) + 1e-12
        self.params["dyn_sd"] = d.std(axis=0) + 1e-12
        self.params["energy_mu"] = np.array([e.mean()])
        self.params["energy_sd"] = np.array([e.std() + 1e-12])

    @property
    def probe_layers(self):
        return [LAYER]

    def layer_channels(self, layer):
        if layer != LAYER:
            raise ValueError(f"unknown layer {layer!r}")
        return WIDTH

    def features(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        s, d, e = raw_features(x)
        zs = (s - p["static_mu"]) / p["static_sd"]
        zd = d / p["dyn_sd"]
        ze = ((e - p["energy_mu"]) / p["energy_sd"])[:, None]
        a = np.sqrt(JOINT_STATIC_WEIGHT)
        joint = a * zs + np.sqrt(1.0 - JOINT_STATIC_WEIGHT) * ze
        dead = np.zeros((x.shape[0], len(DEAD_CHANNELS)))
        return np.concatenate([zs, zd, joint, dead], axis=1)

    def forward(self, x, capture=False, training=False):
        x = np.asarray(x)
        self._check_input(x, self.input_shape + (self.descriptor.in_channels,))
        h, _ = self._modulate(LAYER, self.features(x), training)
        # direction head: score of class k is the velocity projected on its unit step
        steps = np.array(_STEPS, dtype=np.float64)
        steps /= np.linalg.norm(steps, axis=1, keepdims=True)
        vel = h[:, [DYNAMIC_CHANNELS[0], DYNAMIC_CHANNELS[1]]] * self.params["dyn_sd"][:2]
        out = vel @ steps.T
        if capture:
            return out, {LAYER: h}
        return out

    def backward(self, dout):
        raise NotImplementedError("the planted network is not trainable")
