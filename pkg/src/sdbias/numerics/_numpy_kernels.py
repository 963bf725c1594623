"""Pure-numpy reference implementations of the hot kernels.

Every function here has a twin in ``_numba_kernels`` with the same signature.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pad_same(x, kt, kh, kw):
    pt, ph, pw = kt // 2, kh // 2, kw // 2
    return np.pad(x, ((0, 0), (pt, pt), (ph, ph), (pw, pw), (0, 0)))


def conv_forward(x, w, b, return_aux=False):
    """Same-padded stride-1 correlation.

    x: (B, T, H, W, Ci), w: (kt, kh, kw, Ci, Co), b: (Co,) -> (B, T, H, W, Co)
    ``aux`` is unused by this backend and returned as None.
    """
    kt, kh, kw, ci, co = w.shape
    xp = _pad_same(x, kt, kh, kw)
    # windows: (B, T, H, W, Ci, kt, kh, kw)
    win = sliding_window_view(xp, (kt, kh, kw), axis=(1, 2, 3))
    out = np.tensordot(win, w.transpose(3, 0, 1, 2, 4), axes=([4, 5, 6, 7], [0, 1, 2, 3]))
    out += b
    out = out.astype(x.dtype, copy=False)
    return (out, None) if return_aux else out


def conv_backward(dout, x, w, need_dx=True, aux=None):
    """Gradients (dx, dw, db); dx is None when ``need_dx`` is false."""
    kt, kh, kw, ci, co = w.shape
    xp = _pad_same(x, kt, kh, kw)
    win = sliding_window_view(xp, (kt, kh, kw), axis=(1, 2, 3))
    dw = np.tensordot(win, dout, axes=([0, 1, 2, 3], [0, 1, 2, 3]))  # (Ci, kt, kh, kw, Co)
    dw = dw.transpose(1, 2, 3, 0, 4)
    db = dout.sum(axis=(0, 1, 2, 3))
    if not need_dx:
        return None, dw.astype(w.dtype, copy=False), db.astype(w.dtype, copy=False)
    # dx is the full correlation of dout with the spatially flipped kernel
    dp = _pad_same(dout, kt, kh, kw)
    dwin = sliding_window_view(dp, (kt, kh, kw), axis=(1, 2, 3))  # (B,T,H,W,Co,kt,kh,kw)
    wf = w[::-1, ::-1, ::-1].transpose(4, 0, 1, 2, 3)  # (Co, kt, kh, kw, Ci)
    dx = np.tensordot(dwin, wf, axes=([4, 5, 6, 7], [0, 1, 2, 3]))
    return dx.astype(x.dtype, copy=False), dw.astype(w.dtype, copy=False), db.astype(w.dtype, copy=False)


def corr_update(a, b, count, mean_a, mean_b, m2_a, m2_b, co):
    """Merge a block of rows into running per-channel moments (Chan et al.).

    a, b: (n, C). Accumulators are float64 arrays of shape (C,), updated in place.
    Returns the new count.
    """
    n = a.shape[0]
    if n == 0:
        return count
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    ma = a.mean(axis=0)
    mb = b.mean(axis=0)
    da = a - ma
    db = b - mb
    blk_m2a = (da * da).sum(axis=0)
    blk_m2b = (db * db).sum(axis=0)
    blk_co = (da * db).sum(axis=0)
    total = count + n
    delta_a = ma - mean_a
    delta_b = mb - mean_b
    frac = count * n / total
    m2_a += blk_m2a + delta_a * delta_a * frac
    m2_b += blk_m2b + delta_b * delta_b * frac
    co += blk_co + delta_a * delta_b * frac
    mean_a += delta_a * n / total
    mean_b += delta_b * n / total
    return total


def weighted_sample_without_replacement(p, m, u):
    """Draw m distinct indices per row from the categorical rows of p.

    Each draw inverts the CDF of the remaining (renormalized) mass with one
    uniform from u[row, j]. p: (R, C) float64, u: (R, m). Returns (R, m) int64.
    """
    rows, c = p.shape
    out = np.empty((rows, m), dtype=np.int64)
    for r in range(rows):
        w = p[r].astype(np.float64).copy()
        for j in range(m):
            cdf = np.cumsum(w)
            k = int(np.searchsorted(cdf, u[r, j] * cdf[-1], side="right"))
            if k >= c:
                # rounding at the top end: take the last slot with mass left
                k = int(np.flatnonzero(w > 0.0)[-1])
            out[r, j] = k
            w[k] = 0.0
    return out
