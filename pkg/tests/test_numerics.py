import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sdbias.numerics import (CorrAccumulator, NonFiniteError, Rng, column_pearson, gap_pool,
                             live_columns, pearson, sigmoid, softmax)
from sdbias.numerics import kernels
from sdbias.numerics.kernels import load_backend

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def brute_pearson(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((y - mb) ** 2 for y in b)
    return cov / math.sqrt(va * vb)


def test_pearson_matches_textbook_formula():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.normal(size=30)
        b = 0.3 * a + rng.normal(size=30)
        assert pearson(a, b) == pytest.approx(brute_pearson(a.tolist(), b.tolist()), abs=1e-12)


def test_pearson_known_values():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert pearson([1, 2, 3, 4], [1, -1, -1, 1]) == pytest.approx(0.0, abs=1e-15)


def test_pearson_degenerate_and_errors():
    assert pearson([5, 5, 5], [1, 2, 3]) == 0.0
    assert pearson([1, 2, 3], [0, 0, 0]) == 0.0
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson([1], [1])


@given(arrays(np.float64, (12, 3), elements=finite), arrays(np.float64, (12, 3), elements=finite))
def test_column_pearson_bounded_and_symmetric(a, b):
    r = column_pearson(a, b)
    assert np.all(np.abs(r) <= 1.0)
    np.testing.assert_allclose(r, column_pearson(b, a), atol=1e-12)


@given(arrays(np.float64, (10, 2), elements=st.floats(-10, 10)),
       st.floats(0.1, 10), st.floats(-5, 5))
def test_pearson_invariant_to_positive_affine_maps(a, scale, shift):
    b = a[::-1].copy()
    r = column_pearson(a, b)
    r2 = column_pearson(a * scale + shift, b)
    live = live_columns(a, b) & live_columns(a * scale + shift, b)
    np.testing.assert_allclose(r[live], r2[live], atol=1e-7)


def test_live_columns():
    z1 = np.array([[1.0, 2.0, 3.0], [2.0, 2.0, 1.0], [3.0, 2.0, 0.0]])
    z2 = np.array([[1.0, 1.0, 7.0], [0.0, 2.0, 7.0], [4.0, 3.0, 7.0]])
    assert live_columns(z1, z2).tolist() == [True, False, False]


@given(arrays(np.float64, (17, 4), elements=finite), arrays(np.float64, (17, 4), elements=finite),
       st.lists(st.integers(1, 6), min_size=1, max_size=6))
def test_accumulator_matches_two_pass(a, b, chunks):
    acc = CorrAccumulator(4)
    i = 0
    for c in chunks * 5:
        if i >= len(a):
            break
        acc.update(a[i:i + c], b[i:i + c])
        i += c
    acc.update(a[i:], b[i:])
    np.testing.assert_allclose(acc.finalize(), column_pearson(a, b), atol=1e-9)


def test_accumulator_row_order_determinism():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(50, 5)), rng.normal(size=(50, 5))
    r1 = CorrAccumulator(5).update(a, b).finalize()
    r2 = CorrAccumulator(5).update(a, b).finalize()
    assert r1.tobytes() == r2.tobytes()
    with pytest.raises(ValueError):
        CorrAccumulator(5).update(a[:1], b[:1]).finalize()


def test_softmax_closed_form():
    # e / (2 + e) and 1 / (2 + e)
    p = softmax([0.0, 0.0, 1.0]) * 100
    e = math.e
    np.testing.assert_allclose(p, [100 / (2 + e), 100 / (2 + e), 100 * e / (2 + e)], atol=1e-12)
    np.testing.assert_allclose(p, [21.19, 21.19, 57.61], atol=5e-3)


@given(arrays(np.float64, 5, elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_shift_invariant_and_normalized(s, c):
    p = softmax(s)
    assert p.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(p, softmax(s + c), atol=1e-12)


def test_softmax_rejects_bad_input():
    with pytest.raises(ValueError):
        softmax([])
    with pytest.raises(NonFiniteError):
        softmax([0.0, np.nan])


def test_gap_pool_and_sigmoid():
    t = np.arange(24, dtype=np.float64).reshape(2, 3, 4)
    np.testing.assert_allclose(gap_pool(t), t.mean(axis=(0, 1)))
    np.testing.assert_allclose(gap_pool(t, channel_axis=0), t.mean(axis=(1, 2)))
    x = np.array([-800.0, -1.0, 0.0, 1.0, 800.0])
    np.testing.assert_allclose(sigmoid(x), [0.0, 1 / (1 + math.e), 0.5, 1 / (1 + math.exp(-1)), 1.0])


def test_rng_substreams():
    a = Rng(7).child("x").random(5)
    assert np.array_equal(a, Rng(7).child("x").random(5))
    assert not np.array_equal(a, Rng(7).child("y").random(5))
    parent = Rng(7)
    parent.random(100)
    # a child's key never depends on how much the parent consumed
    assert np.array_equal(parent.child("x").random(5), a)
    r = Rng(9)
    r.random(3)
    state = r.get_state()
    assert np.array_equal(Rng.from_state(state).random(4), r.random(4))
    with pytest.raises(ValueError):
        Rng(-1)


# ---------------------------------------------------------------- kernels

def naive_conv(x, w, b):
    kt, kh, kw, ci, co = w.shape
    B, T, H, W, _ = x.shape
    xp = np.pad(x, ((0, 0), (kt // 2,) * 2, (kh // 2,) * 2, (kw // 2,) * 2, (0, 0)))
    out = np.zeros((B, T, H, W, co))
    for t in range(T):
        for i in range(H):
            for j in range(W):
                patch = xp[:, t:t + kt, i:i + kh, j:j + kw, :]
                out[:, t, i, j] = np.tensordot(patch, w, axes=([1, 2, 3, 4], [0, 1, 2, 3])) + b
    return out


BACKENDS = ["numpy", "numba"]


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("kshape", [(3, 3, 3), (1, 3, 3), (1, 1, 1)])
def test_conv_forward_matches_naive_loops(backend, kshape):
    k = load_backend(backend)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 4, 5, 6, 3))
    w = rng.normal(size=kshape + (3, 4))
    b = rng.normal(size=4)
    np.testing.assert_allclose(k.conv_forward(x, w, b), naive_conv(x, w, b), atol=1e-10)


@pytest.mark.parametrize("backend", BACKENDS)
def test_conv_backward_matches_finite_differences(backend):
    k = load_backend(backend)
    rng = np.random.default_rng(2)
    x = rng.normal(size=(1, 3, 4, 4, 2))
    w = rng.normal(size=(3, 3, 3, 2, 3))
    b = rng.normal(size=3)
    dout = rng.normal(size=(1, 3, 4, 4, 3))
    dx, dw, db = k.conv_backward(dout, x, w)
    f = lambda xx, ww, bb: float((k.conv_forward(xx, ww, bb) * dout).sum())
    h = 1e-6
    for arr, grad in ((x, dx), (w, dw), (b, db)):
        flat = arr.reshape(-1)
        for idx in rng.choice(flat.size, size=min(8, flat.size), replace=False):
            old = flat[idx]
            flat[idx] = old + h
            fp = f(x, w, b)
            flat[idx] = old - h
            fm = f(x, w, b)
            flat[idx] = old
            assert grad.reshape(-1)[idx] == pytest.approx((fp - fm) / (2 * h), rel=1e-6, abs=1e-8)
    assert k.conv_backward(dout, x, w, need_dx=False)[0] is None


def test_backends_agree():
    a, b = load_backend("numpy"), load_backend("numba")
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 4, 6, 6, 3)).astype(np.float32)
    w = rng.normal(size=(3, 3, 3, 3, 5)).astype(np.float32)
    bias = rng.normal(size=5).astype(np.float32)
    np.testing.assert_allclose(a.conv_forward(x, w, bias), b.conv_forward(x, w, bias), rtol=1e-4, atol=1e-4)
    dout = rng.normal(size=(3, 4, 6, 6, 5)).astype(np.float32)
    for ga, gb in zip(a.conv_backward(dout, x, w), b.conv_backward(dout, x, w)):
        np.testing.assert_allclose(ga, gb, rtol=1e-4, atol=1e-3)
    za, zb = rng.normal(size=(20, 4)), rng.normal(size=(20, 4))
    accs = []
    for k in (a, b):
        st_ = [np.zeros(4) for _ in range(5)]
        n = k.corr_update(za[:7], zb[:7], 0, *st_)
        n = k.corr_update(za[7:], zb[7:], n, *st_)
        accs.append(st_)
    for u, v in zip(*accs):
        np.testing.assert_allclose(u, v, atol=1e-10)
    p = rng.random((6, 8))
    u = rng.random((6, 3))
    assert np.array_equal(a.weighted_sample_without_replacement(p, 3, u),
                          b.weighted_sample_without_replacement(p, 3, u))


@pytest.mark.parametrize("backend", BACKENDS)
def test_weighted_sampling_distinct_and_proportional(backend):
    k = load_backend(backend)
    rng = np.random.default_rng(5)
    probs = np.array([0.5, 0.3, 0.15, 0.05])
    draws = k.weighted_sample_without_replacement(np.tile(probs, (20000, 1)), 1, rng.random((20000, 1)))
    freq = np.bincount(draws[:, 0], minlength=4) / 20000
    np.testing.assert_allclose(freq, probs, atol=0.015)
    many = k.weighted_sample_without_replacement(np.tile(probs, (500, 1)), 4, rng.random((500, 4)))
    assert all(sorted(r) == [0, 1, 2, 3] for r in many.tolist())
    # zero-mass slots are never drawn
    z = k.weighted_sample_without_replacement(np.tile([0.0, 1.0, 0.0, 1.0], (200, 1)), 2, rng.random((200, 2)))
    assert set(np.unique(z)) == {1, 3}


def test_backend_choice_is_reported():
    assert kernels.BACKEND in ("numpy", "numba")
    with pytest.raises(ValueError):
        load_backend("cuda")
