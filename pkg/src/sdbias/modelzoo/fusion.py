"""Two-stream fusion and cross-connection modules.

Feature maps here are (B, H, W, c). Channel attention squeezes by spatial
mean and excites with a two-layer gate; spatial attention is a 3x3 conv to a
single sigmoid map. The convex-combination (CCG) variants tie the appearance
and motion weights so they sum to one; the gated (G) variants do not.
"""

from __future__ import annotations

import numpy as np

from . import layers as L


def _conv2d(x, w, b):
    out, cache = L.conv_forward(x[:, None], w, b)
    return out[:, 0], cache


def _conv2d_backward(dout, cache):
    dx, dw, db = L.conv_backward(dout[:, None], cache)
    return dx[:, 0], dw, db


def _squeeze(u):
    return u.mean(axis=(1, 2))


def _unsqueeze_grad(ds, shape):
    b, h, w, c = shape
    return np.broadcast_to(ds[:, None, None, :] / (h * w), shape)


def _se_params(p, prefix):
    return p[prefix + "se_w1"], p[prefix + "se_b1"], p[prefix + "se_w2"], p[prefix + "se_b2"]


def _se_names(prefix):
    return [prefix + k for k in ("se_w1", "se_b1", "se_w2", "se_b2")]


# ------------------------------------------------------------ channel attention

def ccg_channel_attention(u_a, u_m, params, prefix="fuse_", force_gate=None):
    """Convex channel gate: returns (Z_a, Z_m, A_c, cache) with A_c of shape (B, c).

    Z_a = A_c * U_a and Z_m = (1 - A_c) * U_m, broadcast over space.
    """
    if u_a.shape != u_m.shape:
        raise ValueError(f"appearance {u_a.shape} and motion {u_m.shape} features differ in shape")
    u = np.concatenate([u_a, u_m], axis=-1)
    s = _squeeze(u)
    a, se_cache = L.se_forward(s, *_se_params(params, prefix))
    if force_gate is not None:
        a = np.full_like(a, force_gate)
        se_cache = None
    g = a[:, None, None, :]
    z_a = g * u_a
    z_m = (1 - g) * u_m
    return z_a, z_m, a, (u_a, u_m, a, se_cache)


def ccg_channel_attention_backward(dz_a, dz_m, cache, prefix="fuse_"):
    u_a, u_m, a, se_cache = cache
    g = a[:, None, None, :]
    du_a = g * dz_a
    du_m = (1 - g) * dz_m
    grads = {}
    if se_cache is not None:
        da = (dz_a * u_a).sum(axis=(1, 2)) - (dz_m * u_m).sum(axis=(1, 2))
        ds, *pg = L.se_backward(da, se_cache)
        grads.update(zip(_se_names(prefix), pg))
        du = _unsqueeze_grad(ds, u_a.shape[:3] + (2 * u_a.shape[3],))
        c = u_a.shape[3]
        du_a = du_a + du[..., :c]
        du_m = du_m + du[..., c:]
    return du_a, du_m, grads


def gated_channel_attention(u_a, u_m, params, prefix="fuse_", force_gate=None):
    """Unconstrained channel gate on U_a ⊕ U_m: returns (Z, A_c, cache), A_c of shape (B, 2c)."""
    if u_a.shape != u_m.shape:
        raise ValueError(f"appearance {u_a.shape} and motion {u_m.shape} features differ in shape")
    u = np.concatenate([u_a, u_m], axis=-1)
    a, se_cache = L.se_forward(_squeeze(u), *_se_params(params, prefix))
    if force_gate is not None:
        a = np.full_like(a, force_gate)
        se_cache = None
    return a[:, None, None, :] * u, a, (u, a, se_cache)


def gated_channel_attention_backward(dz, cache, prefix="fuse_"):
    u, a, se_cache = cache
    du = a[:, None, None, :] * dz
    grads = {}
    if se_cache is not None:
        da = (dz * u).sum(axis=(1, 2))
        ds, *pg = L.se_backward(da, se_cache)
        grads.update(zip(_se_names(prefix), pg))
        du = du + _unsqueeze_grad(ds, u.shape)
    c = u.shape[3] // 2
    return du[..., :c], du[..., c:], grads


# ------------------------------------------------------------ spatial attention

def ccg_spatial_attention(z_a, z_m, params, prefix="fuse_", force_gate=None):
    """Z = A_sp * Z_a ⊕ (1 - A_sp) * Z_m with A_sp = sigmoid(conv3x3(Z_a ⊕ Z_m)).

    Returns (Z, A_sp, cache); A_sp has shape (B, H, W, 1).
    """
    if z_a.shape != z_m.shape:
        raise ValueError(f"appearance {z_a.shape} and motion {z_m.shape} features differ in shape")
    x = np.concatenate([z_a, z_m], axis=-1)
    logit, conv_cache = _conv2d(x, params[prefix + "sp_w"], params[prefix + "sp_b"])
    a = L.sigmoid(logit)
    if force_gate is not None:
        a = np.full_like(a, force_gate)
        conv_cache = None
    z = np.concatenate([a * z_a, (1 - a) * z_m], axis=-1)
    return z, a, (z_a, z_m, a, conv_cache)


def ccg_spatial_attention_backward(dz, cache, prefix="fuse_"):
    z_a, z_m, a, conv_cache = cache
    c = z_a.shape[3]
    dza = a * dz[..., :c]
    dzm = (1 - a) * dz[..., c:]
    grads = {}
    if conv_cache is not None:
        da = (dz[..., :c] * z_a).sum(axis=-1, keepdims=True) - (dz[..., c:] * z_m).sum(axis=-1, keepdims=True)
        dx, grads[prefix + "sp_w"], grads[prefix + "sp_b"] = _conv2d_backward(da * a * (1 - a), conv_cache)
        dza = dza + dx[..., :c]
        dzm = dzm + dx[..., c:]
    return dza, dzm, grads


def gated_spatial_attention(z, params, prefix="fuse_"):
    """Residual spatial gate: Z' = A_sp * Z + Z, A_sp = sigmoid(conv3x3(Z))."""
    logit, conv_cache = _conv2d(z, params[prefix + "sp_w"], params[prefix + "sp_b"])
    a = L.sigmoid(logit)
    return a * z + z, a, (z, a, conv_cache)


def gated_spatial_attention_backward(dout, cache, prefix="fuse_"):
    z, a, conv_cache = cache
    da = (dout * z).sum(axis=-1, keepdims=True)
    dx, dw, db = _conv2d_backward(da * a * (1 - a), conv_cache)
    return dout * (a + 1) + dx, {prefix + "sp_w": dw, prefix + "sp_b": db}


# ------------------------------------------------------------ cross connections

def _gated_transfer(src, w, b, g):
    t, lin_cache = L.linear_forward(src, w, b)
    gate = L.sigmoid(g)
    return gate * t, (lin_cache, t, gate, g)


def _gated_transfer_backward(dout, cache):
    lin_cache, t, gate, g = cache
    dg = (dout * t).sum(axis=(0, 1, 2)) * gate * (1 - gate)
    dsrc, dw, db = L.linear_backward(dout * gate, lin_cache)
    return dsrc, dw, db, dg


def cross_connect(a, m, topology, params):
    """Exchange features between streams after a block.

    ``None`` passes both through; ``MotionToAppearance`` adds a sigmoid-gated
    1x1 conv of m to a; ``Bidirectional`` also adds the mirror transfer from a
    to m, both computed from the incoming features.
    """
    topology = str(getattr(topology, "value", topology))
    if topology == "None":
        return a, m, ("None", None, None)
    to_a, cache_ma = _gated_transfer(m, params["x_ma_w"], params["x_ma_b"], params["x_ma_g"])
    a_out = a + to_a
    if topology == "MotionToAppearance":
        return a_out, m, (topology, cache_ma, None)
    if topology != "Bidirectional":
        raise ValueError(f"unknown cross-connection topology {topology!r}")
    to_m, cache_am = _gated_transfer(a, params["x_am_w"], params["x_am_b"], params["x_am_g"])
    return a_out, m + to_m, (topology, cache_ma, cache_am)


def cross_connect_backward(da_out, dm_out, cache):
    topology, cache_ma, cache_am = cache
    grads = {}
    if topology == "None":
        return da_out, dm_out, grads
    dm_extra, grads["x_ma_w"], grads["x_ma_b"], grads["x_ma_g"] = _gated_transfer_backward(da_out, cache_ma)
    da, dm = da_out, dm_out + dm_extra
    if cache_am is not None:
        da_extra, grads["x_am_w"], grads["x_am_b"], grads["x_am_g"] = _gated_transfer_backward(dm_out, cache_am)
        da = da + da_extra
    return da, dm, grads
