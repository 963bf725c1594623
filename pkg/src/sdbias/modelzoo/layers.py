"""Layer primitives with hand-written backward passes.

Feature maps are channels-last: (B, T, H, W, C). Two-stream models use T = 1
and (1, 3, 3) kernels. Every ``*_forward`` returns ``(out, cache)``; the
matching ``*_backward`` takes ``(dout, cache)``.
"""

import numpy as np

from ..numerics import kernels
from ..numerics.core import sigmoid


def conv_forward(x, w, b):
    out, aux = kernels.conv_forward(x, w, b, return_aux=True)
    return out, (x, w, aux)


def conv_backward(dout, cache, need_dx=True):
    x, w, aux = cache
    return kernels.conv_backward(dout, x, w, need_dx, aux)


def relu_forward(x):
    return np.maximum(x, 0), x


def relu_backward(dout, cache):
    return np.where(cache > 0, dout, 0).astype(dout.dtype, copy=False)


def pool_forward(x):
    """2x2 spatial average pooling, stride 2; H and W must be even."""
    b, t, h, w, c = x.shape
    out = x.reshape(b, t, h // 2, 2, w // 2, 2, c).mean(axis=(3, 5))
    return out.astype(x.dtype, copy=False), x.shape


def pool_backward(dout, shape):
    d = np.repeat(np.repeat(dout, 2, axis=2), 2, axis=3) * 0.25
    return d.astype(dout.dtype, copy=False).reshape(shape)


def gap_forward(x):
    """Mean over (T, H, W) -> (B, C)."""
    return x.mean(axis=(1, 2, 3)).astype(x.dtype, copy=False), x.shape


def gap_backward(dout, shape):
    b, t, h, w, c = shape
    return np.broadcast_to(dout[:, None, None, None, :] / (t * h * w), shape).astype(dout.dtype)


def linear_forward(x, w, b):
    return x @ w + b, (x, w)


def linear_backward(dout, cache):
    x, w = cache
    lead = tuple(range(dout.ndim - 1))
    dw = np.tensordot(x, dout, axes=(lead, lead))
    return dout @ w.T, dw, dout.sum(axis=lead)


def sigmoid_forward(x):
    y = sigmoid(x)
    return y, y


def sigmoid_backward(dout, y):
    return dout * y * (1 - y)


def se_forward(s, w1, b1, w2, b2):
    """Squeeze-excitation gate on pooled features s: sigmoid(relu(s W1 + b1) W2 + b2)."""
    h, c1 = linear_forward(s, w1, b1)
    r, c2 = relu_forward(h)
    e, c3 = linear_forward(r, w2, b2)
    a, c4 = sigmoid_forward(e)
    return a, (c1, c2, c3, c4)


def se_backward(da, cache):
    c1, c2, c3, c4 = cache
    de = sigmoid_backward(da, c4)
    dr, dw2, db2 = linear_backward(de, c3)
    dh = relu_backward(dr, c2)
    ds, dw1, db1 = linear_backward(dh, c1)
    return ds, dw1, db1, dw2, db2


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. logits."""
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), labels].mean()
    d = np.exp(logp)
    d[np.arange(n), labels] -= 1
    return float(loss), (d / n).astype(logits.dtype)


def binary_cross_entropy(logits, targets):
    """Mean per-pixel BCE-with-logits and its gradient."""
    targets = np.asarray(targets, dtype=logits.dtype)
    if np.any((targets < 0) | (targets > 1)):
        raise ValueError("segmentation targets must lie in [0, 1]")
    loss = np.maximum(logits, 0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    d = (sigmoid(logits) - targets) / logits.size
    return float(loss.mean()), d.astype(logits.dtype)
