"""Toy spatiotemporal networks: a single-stream 3D CNN and a two-stream 2D CNN.

Both expose the same surface: ``forward(x, capture=...)``, ``backward(dout)``
and ``loss_and_grad``. Captured activations are the block outputs after the
ReLU (removal masks act on the pre-activation, so a removed channel reads 0)
and, for two-stream models, the fusion output.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from ..numerics import Rng
from . import fusion as F
from . import layers as L

# colour inputs live in [0, 1]; the networks see them centred on zero
INPUT_CENTER = 0.5


class Kind(str, Enum):
    SINGLE_STREAM_3D = "SingleStream3D"
    TWO_STREAM = "TwoStream"


class CrossConnection(str, Enum):
    NONE = "None"
    MOTION_TO_APPEARANCE = "MotionToAppearance"
    BIDIRECTIONAL = "Bidirectional"


class Fusion(str, Enum):
    GATED = "Gated"
    CCG = "ConvexCombinationGated"


class Head(str, Enum):
    CLASSIFIER = "classifier"
    SEGMENTER = "segmenter"


@dataclass(frozen=True)
class ArchitectureDescriptor:
    kind: Kind = Kind.SINGLE_STREAM_3D
    widths: tuple[int, ...] = (8, 16)
    cross_connection: CrossConnection = CrossConnection.NONE
    fusion: Fusion = Fusion.GATED
    head: Head = Head.CLASSIFIER
    num_classes: int = 8
    se_reduction: int = 2
    in_channels: int = 3
    flow_channels: int = 2

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "cross_connection", CrossConnection(self.cross_connection))
        object.__setattr__(self, "fusion", Fusion(self.fusion))
        object.__setattr__(self, "head", Head(self.head))
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if not self.widths:
            raise ValueError("at least one block width is required")
        if self.kind is Kind.TWO_STREAM and (2 * self.widths[-1]) % self.se_reduction:
            raise ValueError("se_reduction must divide twice the last block width")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("kind", "cross_connection", "fusion", "head"):
            d[k] = d[k].value
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ArchitectureDescriptor:
        return cls(**d)


def _uniform(rng: Rng, shape, fan_in: int, gain: float, dtype) -> np.ndarray:
    bound = np.sqrt(gain / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass
class _ParamSpec:
    shape: tuple
    fan_in: int = 0
    gain: float = 0.0  # 0 -> zero init


class Model:
    """Shared plumbing: parameters, removal masks, per-sample channel noise."""

    descriptor: ArchitectureDescriptor

    def __init__(self, descriptor: ArchitectureDescriptor, rng: Rng | None = None,
                 dtype=np.float32):
        self.descriptor = descriptor
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        rng = rng or Rng(0, "init")
        for name, ps in self._param_specs().items():
            if ps.gain:
                self.params[name] = _uniform(rng.child(name), ps.shape, ps.fan_in, ps.gain, self.dtype)
            else:
                self.params[name] = np.zeros(ps.shape, dtype=self.dtype)
        self.masks: dict[str, np.ndarray] = {}
        self.channel_noise: dict[str, np.ndarray] = {}
        self._cache = None

    # subclasses fill these in
    def _param_specs(self) -> dict[str, _ParamSpec]:
        raise NotImplementedError

    @property
    def probe_layers(self) -> list[str]:
        raise NotImplementedError

    def layer_channels(self, layer: str) -> int:
        raise NotImplementedError

    # ---------------------------------------------------------------- masks
    def _modulate(self, name, p, training):
        mult = None
        if name in self.masks:
            mult = self.masks[name].astype(p.dtype)
        if training and name in self.channel_noise:
            noise = self.channel_noise[name].astype(p.dtype)
            mult = noise if mult is None else mult * noise
        if mult is None:
            return p, None
        shape = (mult.shape[0],) + (1,) * (p.ndim - 2) + (p.shape[-1],) if mult.ndim == 2 else mult.shape
        mult = mult.reshape(shape)
        return p * mult, mult

    @staticmethod
    def _demodulate(dp, mult):
        return dp if mult is None else dp * mult

    # ---------------------------------------------------------------- training API
    def loss_and_grad(self, x, targets):
        out = self.forward(x, training=True)
        if self.descriptor.head is Head.CLASSIFIER:
            loss, dout = L.softmax_cross_entropy(out, targets)
        else:
            loss, dout = L.binary_cross_entropy(out, targets)
        return loss, self.backward(dout)

    def loss(self, x, targets) -> float:
        out = self.forward(x)
        if self.descriptor.head is Head.CLASSIFIER:
            return L.softmax_cross_entropy(out, targets)[0]
        return L.binary_cross_entropy(out, targets)[0]

    def clone(self) -> Model:
        other = copy.copy(self)
        other.params = {k: v.copy() for k, v in self.params.items()}
        other.masks = {k: v.copy() for k, v in self.masks.items()}
        other.channel_noise = {}
        other._cache = None
        return other

    def astype(self, dtype) -> Model:
        other = self.clone()
        other.dtype = np.dtype(dtype)
        other.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return other

    def _check_input(self, x, expected_tail):
        if tuple(x.shape[1:]) != tuple(expected_tail):
            raise ValueError(f"input shape {x.shape} does not match (B, {', '.join(map(str, expected_tail))})")


class SingleStream3D(Model):
    """Blocks of 3x3x3 conv -> ReLU -> 2x2 spatial average pool, then a head."""

    def __init__(self, descriptor, rng=None, dtype=np.float32, input_shape=(8, 16, 16)):
        self.input_shape = tuple(input_shape)
        super().__init__(descriptor, rng, dtype)

    def _param_specs(self):
        d = self.descriptor
        specs = {}
        cin = d.in_channels
        for i, cout in enumerate(d.widths, start=1):
            specs[f"block{i}_w"] = _ParamSpec((3, 3, 3, cin, cout), 27 * cin, 6.0)
            specs[f"block{i}_b"] = _ParamSpec((cout,))
            cin = cout
        if d.head is Head.CLASSIFIER:
            specs["head_w"] = _ParamSpec((cin, d.num_classes), cin, 3.0)
            specs["head_b"] = _ParamSpec((d.num_classes,))
        else:
            specs["head_w"] = _ParamSpec((cin, 1), cin, 3.0)
            specs["head_b"] = _ParamSpec((1,))
        return specs

    @property
    def probe_layers(self):
        return [f"block{i}" for i in range(1, len(self.descriptor.widths) + 1)]

    def layer_channels(self, layer):
        return self.descriptor.widths[self.probe_layers.index(layer)]

    def forward(self, x, capture=False, training=False):
        x = np.asarray(x, dtype=self.dtype)
        self._check_input(x, self.input_shape + (self.descriptor.in_channels,))
        acts = {}
        caches = []
        h = x - self.dtype.type(INPUT_CENTER)
        for i, name in enumerate(self.probe_layers, start=1):
            p, c_conv = L.conv_forward(h, self.params[f"block{i}_w"], self.params[f"block{i}_b"])
            p, mult = self._modulate(name, p, training)
            a, c_relu = L.relu_forward(p)
            if capture:
                acts[name] = a
            h, c_pool = L.pool_forward(a)
            caches.append((c_conv, mult, c_relu, c_pool))
        if self.descriptor.head is Head.CLASSIFIER:
            g, c_gap = L.gap_forward(h)
            out, c_head = L.linear_forward(g, self.params["head_w"], self.params["head_b"])
        else:
            g = h.mean(axis=1)
            c_gap = h.shape
            s, c_head = L.linear_forward(g, self.params["head_w"], self.params["head_b"])
            f = 2 ** len(self.descriptor.widths)
            out = np.repeat(np.repeat(s[..., 0], f, axis=1), f, axis=2)
        self._cache = (caches, c_gap, c_head)
        return (out, acts) if capture else out

    def backward(self, dout):
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        caches, c_gap, c_head = self._cache
        grads = {}
        if self.descriptor.head is Head.CLASSIFIER:
            dg, grads["head_w"], grads["head_b"] = L.linear_backward(dout, c_head)
            dh = L.gap_backward(dg, c_gap)
        else:
            f = 2 ** len(self.descriptor.widths)
            b, hh, ww = dout.shape
            ds = dout.reshape(b, hh // f, f, ww // f, f).sum(axis=(2, 4))[..., None]
            dg, grads["head_w"], grads["head_b"] = L.linear_backward(ds, c_head)
            t_len = c_gap[1]
            dh = np.broadcast_to(dg[:, None] / t_len, c_gap)
        for i in range(len(caches), 0, -1):
            c_conv, mult, c_relu, c_pool = caches[i - 1]
            da = L.pool_backward(dh, c_pool)
            dp = self._demodulate(L.relu_backward(da, c_relu), mult)
            dh, grads[f"block{i}_w"], grads[f"block{i}_b"] = L.conv_backward(dp, c_conv, need_dx=i > 1)
        return {k: grads[k] for k in self.params}


class TwoStream(Model):
    """Appearance (RGB key frame) and motion (flow key frame) streams of
    3x3 conv -> ReLU blocks at full resolution, a cross connection after
    block 1, and a fusion module after the last block."""

    def __init__(self, descriptor, rng=None, dtype=np.float32, input_shape=(16, 16)):
        self.input_shape = tuple(input_shape)
        super().__init__(descriptor, rng, dtype)

    def _param_specs(self):
        d = self.descriptor
        specs = {}
        for stream, cin0 in (("app", d.in_channels), ("mot", d.flow_channels)):
            cin = cin0
            for i, cout in enumerate(d.widths, start=1):
                specs[f"{stream}{i}_w"] = _ParamSpec((1, 3, 3, cin, cout), 9 * cin, 6.0)
                specs[f"{stream}{i}_b"] = _ParamSpec((cout,))
                cin = cout
        c1 = d.widths[0]
        if d.cross_connection is not CrossConnection.NONE:
            specs["x_ma_w"] = _ParamSpec((c1, c1), c1, 3.0)
            specs["x_ma_b"] = _ParamSpec((c1,))
            specs["x_ma_g"] = _ParamSpec((c1,))
        if d.cross_connection is CrossConnection.BIDIRECTIONAL:
            specs["x_am_w"] = _ParamSpec((c1, c1), c1, 3.0)
            specs["x_am_b"] = _ParamSpec((c1,))
            specs["x_am_g"] = _ParamSpec((c1,))
        c = d.widths[-1]
        hidden = 2 * c // d.se_reduction
        gate_out = c if d.fusion is Fusion.CCG else 2 * c
        specs["fuse_se_w1"] = _ParamSpec((2 * c, hidden), 2 * c, 6.0)
        specs["fuse_se_b1"] = _ParamSpec((hidden,))
        specs["fuse_se_w2"] = _ParamSpec((hidden, gate_out), hidden, 3.0)
        specs["fuse_se_b2"] = _ParamSpec((gate_out,))
        specs["fuse_sp_w"] = _ParamSpec((1, 3, 3, 2 * c, 1), 18 * c, 3.0)
        specs["fuse_sp_b"] = _ParamSpec((1,))
        out = d.num_classes if d.head is Head.CLASSIFIER else 1
        specs["head_w"] = _ParamSpec((2 * c, out), 2 * c, 3.0)
        specs["head_b"] = _ParamSpec((out,))
        return specs

    @property
    def probe_layers(self):
        names = []
        for i in range(1, len(self.descriptor.widths) + 1):
            names += [f"app_block{i}", f"mot_block{i}"]
        return names + ["fusion"]

    def layer_channels(self, layer):
        if layer == "fusion":
            return 2 * self.descriptor.widths[-1]
        return self.descriptor.widths[int(layer.split("block")[1]) - 1]

    # the three stages are separate so tests can drive each stream on its own
    def streams_forward(self, rgb, flow, capture=False, training=False):
        d = self.descriptor
        a = np.asarray(rgb, dtype=self.dtype)[:, None] - self.dtype.type(INPUT_CENTER)
        m = np.asarray(flow, dtype=self.dtype)[:, None]
        acts = {}
        caches = []
        for i in range(1, len(d.widths) + 1):
            pa, ca = L.conv_forward(a, self.params[f"app{i}_w"], self.params[f"app{i}_b"])
            pm, cm = L.conv_forward(m, self.params[f"mot{i}_w"], self.params[f"mot{i}_b"])
            pa, ma = self._modulate(f"app_block{i}", pa, training)
            pm, mm = self._modulate(f"mot_block{i}", pm, training)
            a, ra = L.relu_forward(pa)
            m, rm = L.relu_forward(pm)
            if capture:
                acts[f"app_block{i}"] = a[:, 0]
                acts[f"mot_block{i}"] = m[:, 0]
            xc = None
            if i == 1:
                a0, m0, xc = F.cross_connect(a[:, 0], m[:, 0], d.cross_connection, self.params)
                a, m = a0[:, None], m0[:, None]
            caches.append((ca, cm, ma, mm, ra, rm, xc))
        self._stream_cache = caches
        return a[:, 0], m[:, 0], acts

    def streams_backward(self, du_a, du_m):
        grads = {}
        da, dm = du_a[:, None], du_m[:, None]
        for i in range(len(self._stream_cache), 0, -1):
            ca, cm, ma, mm, ra, rm, xc = self._stream_cache[i - 1]
            if xc is not None:
                da0, dm0, xg = F.cross_connect_backward(da[:, 0], dm[:, 0], xc)
                grads.update(xg)
                da, dm = da0[:, None], dm0[:, None]
            dpa = self._demodulate(L.relu_backward(da, ra), ma)
            dpm = self._demodulate(L.relu_backward(dm, rm), mm)
            da, grads[f"app{i}_w"], grads[f"app{i}_b"] = L.conv_backward(dpa, ca, need_dx=i > 1)
            dm, grads[f"mot{i}_w"], grads[f"mot{i}_b"] = L.conv_backward(dpm, cm, need_dx=i > 1)
        return grads

    def fusion_forward(self, u_a, u_m):
        if self.descriptor.fusion is Fusion.CCG:
            z_a, z_m, _, c1 = F.ccg_channel_attention(u_a, u_m, self.params)
            z, _, c2 = F.ccg_spatial_attention(z_a, z_m, self.params)
        else:
            zc, _, c1 = F.gated_channel_attention(u_a, u_m, self.params)
            z, _, c2 = F.gated_spatial_attention(zc, self.params)
        self._fusion_cache = (c1, c2)
        return z

    def fusion_backward(self, dz):
        c1, c2 = self._fusion_cache
        if self.descriptor.fusion is Fusion.CCG:
            dza, dzm, g2 = F.ccg_spatial_attention_backward(dz, c2)
            du_a, du_m, g1 = F.ccg_channel_attention_backward(dza, dzm, c1)
        else:
            dzc, g2 = F.gated_spatial_attention_backward(dz, c2)
            du_a, du_m, g1 = F.gated_channel_attention_backward(dzc, c1)
        return du_a, du_m, {**g1, **g2}

    def forward(self, x, capture=False, training=False):
        rgb, flow = x
        self._check_input(np.asarray(rgb), self.input_shape + (self.descriptor.in_channels,))
        self._check_input(np.asarray(flow), self.input_shape + (self.descriptor.flow_channels,))
        u_a, u_m, acts = self.streams_forward(rgb, flow, capture, training)
        z = self.fusion_forward(u_a, u_m)
        z, fmult = self._modulate("fusion", z, training)
        if capture:
            acts["fusion"] = z
        if self.descriptor.head is Head.CLASSIFIER:
            g = z.mean(axis=(1, 2))
            out, c_head = L.linear_forward(g, self.params["head_w"], self.params["head_b"])
        else:
            s, c_head = L.linear_forward(z, self.params["head_w"], self.params["head_b"])
            out = s[..., 0]
        self._cache = (z.shape, fmult, c_head)
        return (out, acts) if capture else out

    def backward(self, dout):
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        zshape, fmult, c_head = self._cache
        grads = {}
        if self.descriptor.head is Head.CLASSIFIER:
            dg, grads["head_w"], grads["head_b"] = L.linear_backward(dout, c_head)
            b, h, w, c = zshape
            dz = np.broadcast_to(dg[:, None, None, :] / (h * w), zshape)
        else:
            dz, grads["head_w"], grads["head_b"] = L.linear_backward(dout[..., None], c_head)
        dz = self._demodulate(dz, fmult)
        du_a, du_m, fg = self.fusion_backward(dz)
        grads.update(fg)
        grads.update(self.streams_backward(du_a, du_m))
        return {k: np.asarray(grads[k], dtype=self.dtype) for k in self.params}


def build_model(descriptor: ArchitectureDescriptor, rng: Rng | None = None, dtype=np.float32,
                video_shape=(8, 16, 16)) -> Model:
    if descriptor.kind is Kind.SINGLE_STREAM_3D:
        model = SingleStream3D(descriptor, rng, dtype, input_shape=video_shape)
    else:
        model = TwoStream(descriptor, rng, dtype, input_shape=video_shape[1:])
    model.video_shape = tuple(video_shape)
    return model


def model_inputs(model_or_descriptor, videos, key_frame: int = 0):
    """Stack videos into the input layout the architecture expects."""
    d = getattr(model_or_descriptor, "descriptor", model_or_descriptor)
    if d.kind is Kind.SINGLE_STREAM_3D:
        return np.stack([v.rgb for v in videos])
    rgb = np.stack([v.rgb[key_frame] for v in videos])
    flow = np.stack([v.flow[key_frame] for v in videos])
    return rgb, flow


def model_targets(model_or_descriptor, videos, key_frame: int = 0):
    d = getattr(model_or_descriptor, "descriptor", model_or_descriptor)
    if d.head is Head.CLASSIFIER:
        return np.array([v.label for v in videos], dtype=np.int64)
    return np.stack([v.mask[key_frame] for v in videos]).astype(np.float32)


@dataclass
class ModelCheckpoint:
    descriptor: ArchitectureDescriptor
    params: dict
    velocity: dict
    epoch: int
    rng_state: dict | None = None
    meta: dict = field(default_factory=dict)
    video_shape: tuple = (8, 16, 16)
    masks: dict = field(default_factory=dict)

    def restore(self) -> Model:
        model = build_model(self.descriptor, dtype=next(iter(self.params.values())).dtype,
                            video_shape=self.video_shape)
        model.params = {k: v.copy() for k, v in self.params.items()}
        model.masks = {k: v.copy() for k, v in self.masks.items()}
        return model
