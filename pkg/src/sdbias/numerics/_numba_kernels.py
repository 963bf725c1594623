"""numba-compiled twins of ``_numpy_kernels``.

Convolutions gather patches into a column matrix and hand the contraction
to BLAS; the input gradient is scattered back by a compiled col2im loop.
The gather itself is one strided numpy copy, which beats an element loop
because the innermost (kw, Ci) run is contiguous in the padded input.
Accumulation happens in the input dtype.
"""

import numpy as np
from numba import njit
from numpy.lib.stride_tricks import as_strided


@njit(cache=True)
def _col2im(dcol, kt, kh, kw, dx):
    """Scatter-add adjoint of the patch gather in ``_cols``."""
    bsz, t_len, h_len, w_len, ci = dx.shape
    pt, ph, pw = kt // 2, kh // 2, kw // 2
    r = 0
    for n in range(bsz):
        for t in range(t_len):
            for i in range(h_len):
                for j in range(w_len):
                    k = 0
                    for dt in range(kt):
                        ts = t + dt - pt
                        for di in range(kh):
                            si = i + di - ph
                            for dj in range(kw):
                                sj = j + dj - pw
                                if 0 <= ts < t_len and 0 <= si < h_len and 0 <= sj < w_len:
                                    for c in range(ci):
                                        dx[n, ts, si, sj, c] += dcol[r, k + c]
                                k += ci
                    r += 1


def _cols(x, w):
    """col[(n,t,i,j), (dt,di,dj,c)] = zero-padded x[n, t+dt-pt, i+di-ph, j+dj-pw, c]."""
    kt, kh, kw, ci, co = w.shape
    bsz, t_len, h_len, w_len = x.shape[:4]
    xp = np.pad(x, ((0, 0), (kt // 2,) * 2, (kh // 2,) * 2, (kw // 2,) * 2, (0, 0)))
    s = xp.strides
    win = as_strided(xp, (bsz, t_len, h_len, w_len, kt, kh, kw, ci), s[:4] + s[1:4] + s[4:],
                     writeable=False)
    col = np.empty((bsz * t_len * h_len * w_len, kt * kh * kw * ci), dtype=x.dtype)
    np.copyto(col.reshape(win.shape), win)
    return col


def conv_forward(x, w, b, return_aux=False):
    """Same-padded stride-1 correlation; ``aux`` (the patch matrix) speeds up the backward."""
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w, dtype=x.dtype)
    col = _cols(x, w)
    out = col @ w.reshape(-1, w.shape[4])
    out += b.astype(x.dtype)
    out = out.reshape(x.shape[:4] + (w.shape[4],))
    return (out, col) if return_aux else out


def conv_backward(dout, x, w, need_dx=True, aux=None):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w, dtype=x.dtype)
    kt, kh, kw, ci, co = w.shape
    d2 = np.ascontiguousarray(dout, dtype=x.dtype).reshape(-1, co)
    col = _cols(x, w) if aux is None else aux
    dw = (col.T @ d2).reshape(w.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dx = np.zeros_like(x)
    _col2im(np.ascontiguousarray(d2 @ w.reshape(-1, co).T), kt, kh, kw, dx)
    return dx, dw, db


@njit(cache=True)
def _corr_update(a, b, count, mean_a, mean_b, m2_a, m2_b, co):
    n, c = a.shape
    for r in range(n):
        k = count + r + 1
        for ch in range(c):
            xa = np.float64(a[r, ch])
            xb = np.float64(b[r, ch])
            da = xa - mean_a[ch]
            mean_a[ch] += da / k
            db = xb - mean_b[ch]
            mean_b[ch] += db / k
            m2_a[ch] += da * (xa - mean_a[ch])
            m2_b[ch] += db * (xb - mean_b[ch])
            co[ch] += da * (xb - mean_b[ch])
    return count + n


def corr_update(a, b, count, mean_a, mean_b, m2_a, m2_b, co):
    """Row-by-row Welford update of per-channel moments; returns the new count."""
    return int(_corr_update(np.ascontiguousarray(a), np.ascontiguousarray(b), count,
                            mean_a, mean_b, m2_a, m2_b, co))


@njit(cache=True)
def _weighted_sample(p, m, u, out):
    rows, c = p.shape
    w = np.empty(c, dtype=np.float64)
    cdf = np.empty(c, dtype=np.float64)
    for r in range(rows):
        for k in range(c):
            w[k] = p[r, k]
        for j in range(m):
            acc = 0.0
            for k in range(c):
                acc += w[k]
                cdf[k] = acc
            target = u[r, j] * cdf[c - 1]
            pick = c
            for k in range(c):
                if cdf[k] > target:
                    pick = k
                    break
            if pick >= c:
                for k in range(c - 1, -1, -1):
                    if w[k] > 0.0:
                        pick = k
                        break
            out[r, j] = pick
            w[pick] = 0.0


def weighted_sample_without_replacement(p, m, u):
    p = np.ascontiguousarray(p, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    out = np.empty((p.shape[0], m), dtype=np.int64)
    _weighted_sample(p, m, u, out)
    return out
