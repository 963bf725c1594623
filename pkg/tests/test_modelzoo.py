import itertools
import json

import numpy as np
import pytest

from sdbias.formats import FormatError
from sdbias.modelzoo import (ArchitectureDescriptor, DropoutConfig, NumericFailure, TrainConfig,
                             build_model, evaluate, load_checkpoint, model_inputs, model_targets,
                             save_checkpoint, train)
from sdbias.modelzoo import fusion as F
from sdbias.modelzoo import layers as L
from sdbias.modelzoo.checkpoint import MAGIC
from sdbias.numerics import Rng
from sdbias.pairgen import TaskMode, generate_dataset

from gradcheck import grad_check, perturbed

TWO_STREAM_VARIANTS = list(itertools.product(
    ("None", "MotionToAppearance", "Bidirectional"), ("Gated", "ConvexCombinationGated"),
    ("classifier", "segmenter")))


@pytest.mark.parametrize("cross,fusion,head", TWO_STREAM_VARIANTS)
def test_two_stream_gradients(cross, fusion, head):
    d = ArchitectureDescriptor(kind="TwoStream", widths=(3, 4), cross_connection=cross, fusion=fusion,
                               head=head, num_classes=3)
    model = perturbed(build_model(d, Rng(0), dtype=np.float64, video_shape=(8, 6, 6)))
    mode = TaskMode.CAMOUFLAGE if head == "segmenter" else TaskMode.STATIC_ONLY
    vids = [v for v in generate_dataset(mode, 3, Rng(2), spec=_spec(6))]
    x = model_inputs(model, vids)
    y = model_targets(model, vids) if head == "segmenter" else np.array([0, 2, 1])
    assert grad_check(model, x, y) < 1e-4


@pytest.mark.parametrize("head", ["classifier", "segmenter"])
def test_single_stream_gradients(head):
    d = ArchitectureDescriptor(widths=(3, 4), head=head, num_classes=3)
    model = perturbed(build_model(d, Rng(0), dtype=np.float64, video_shape=(4, 8, 8)))
    mode = TaskMode.CAMOUFLAGE if head == "segmenter" else TaskMode.STATIC_ONLY
    vids = generate_dataset(mode, 2, Rng(3), spec=_spec(8, frames=4))
    x = model_inputs(model, vids)
    y = model_targets(model, vids) if head == "segmenter" else np.array([1, 2])
    assert grad_check(model, x, y) < 1e-4


def _spec(hw, frames=8):
    from sdbias.pairgen import VideoSpec
    return VideoSpec(frames=frames, height=hw, width=hw)


def test_masked_and_noisy_gradients():
    d = ArchitectureDescriptor(widths=(3, 4), num_classes=3)
    model = perturbed(build_model(d, Rng(0), dtype=np.float64, video_shape=(4, 8, 8)))
    model.masks["block1"] = np.array([1.0, 0.0, 1.0])
    model.channel_noise["block2"] = np.array([[2.0, 0.0, 2.0, 2.0], [0.0, 2.0, 2.0, 2.0]])
    vids = generate_dataset(TaskMode.STATIC_ONLY, 2, Rng(3), spec=_spec(8, frames=4))
    x = model_inputs(model, vids)
    y = np.array([0, 1])
    loss = lambda: model.loss_and_grad(x, y)[0]
    model.loss = lambda xx, yy: L.softmax_cross_entropy(model.forward(xx, training=True), yy)[0]
    assert grad_check(model, x, y) < 1e-4
    assert loss() > 0


def test_ccg_weights_sum_to_one():
    rng = np.random.default_rng(0)
    c = 4
    params = {"fuse_se_w1": rng.normal(size=(2 * c, c)), "fuse_se_b1": rng.normal(size=c),
              "fuse_se_w2": rng.normal(size=(c, c)), "fuse_se_b2": rng.normal(size=c),
              "fuse_sp_w": rng.normal(size=(1, 3, 3, 2 * c, 1)), "fuse_sp_b": rng.normal(size=1)}
    ones = np.ones((1, 5, 5, c))
    for _ in range(100):
        u_a = rng.normal(size=(2, 5, 5, c)) * 3
        u_m = rng.normal(size=(2, 5, 5, c)) * 3
        z_a, z_m, a_c, _ = F.ccg_channel_attention(u_a, u_m, params)
        assert np.all((a_c + (1 - a_c)) == 1.0)
        assert np.all((a_c >= 0) & (a_c <= 1))
        # recover the per-channel weights from the module outputs on unit features
        wa, wm, _, _ = F.ccg_channel_attention(ones, ones, params, force_gate=None)
        assert np.all(wa[0, 0, 0] + wm[0, 0, 0] == 1.0)
        z, a_sp, _ = F.ccg_spatial_attention(z_a, z_m, params)
        assert a_sp.shape == (2, 5, 5, 1)
        assert np.all((a_sp + (1 - a_sp)) == 1.0)
        np.testing.assert_array_equal(z[..., :c], a_sp * z_a)
        np.testing.assert_array_equal(z[..., c:], (1 - a_sp) * z_m)


def test_gated_fusion_is_unconstrained_and_residual():
    rng = np.random.default_rng(1)
    c = 3
    params = {"fuse_se_w1": rng.normal(size=(2 * c, c)), "fuse_se_b1": rng.normal(size=c),
              "fuse_se_w2": rng.normal(size=(c, 2 * c)), "fuse_se_b2": rng.normal(size=2 * c),
              "fuse_sp_w": rng.normal(size=(1, 3, 3, 2 * c, 1)), "fuse_sp_b": rng.normal(size=1)}
    u_a, u_m = rng.normal(size=(2, 4, 4, c)), rng.normal(size=(2, 4, 4, c))
    z, a, _ = F.gated_channel_attention(u_a, u_m, params)
    assert a.shape == (2, 2 * c)
    np.testing.assert_allclose(z, a[:, None, None, :] * np.concatenate([u_a, u_m], -1))
    zz, a_sp, _ = F.gated_spatial_attention(z, params)
    np.testing.assert_allclose(zz, a_sp * z + z)
    # a constant gate of 1 passes features through unchanged
    z1, _, _ = F.gated_channel_attention(u_a, u_m, params, force_gate=1.0)
    np.testing.assert_array_equal(z1, np.concatenate([u_a, u_m], -1))


def test_cross_connection_topologies():
    rng = np.random.default_rng(2)
    c = 3
    params = {"x_ma_w": rng.normal(size=(c, c)), "x_ma_b": rng.normal(size=c), "x_ma_g": rng.normal(size=c),
              "x_am_w": rng.normal(size=(c, c)), "x_am_b": rng.normal(size=c), "x_am_g": rng.normal(size=c)}
    a, m = rng.normal(size=(1, 4, 4, c)), rng.normal(size=(1, 4, 4, c))
    a0, m0, _ = F.cross_connect(a, m, "None", params)
    assert a0 is a and m0 is m
    a1, m1, _ = F.cross_connect(a, m, "MotionToAppearance", params)
    assert m1 is m and not np.allclose(a1, a)
    a2, m2, _ = F.cross_connect(a, m, "Bidirectional", params)
    np.testing.assert_array_equal(a2, a1)
    assert not np.allclose(m2, m)
    with pytest.raises(ValueError):
        F.cross_connect(a, m, "Sideways", params)


def test_streams_are_isolated_without_cross_connection():
    d = ArchitectureDescriptor(kind="TwoStream", widths=(3, 4), cross_connection="None")
    model = perturbed(build_model(d, Rng(0), dtype=np.float64))
    vids = generate_dataset(TaskMode.DYNAMIC_ONLY, 3, Rng(1))
    rgb, flow = model_inputs(model, vids)
    _, acts = model.forward((rgb, flow), capture=True)
    _, acts2 = model.forward((rgb[::-1].copy(), flow), capture=True)
    assert np.array_equal(acts["mot_block2"], acts2["mot_block2"])
    # gradient from an appearance-only loss never reaches the motion stream
    model.forward((rgb, flow))
    c = d.widths[-1]
    du_a = np.ones((3, 16, 16, c))
    grads = model.streams_backward(du_a, np.zeros_like(du_a))
    assert not np.any(grads["mot1_w"]) and not np.any(grads["mot2_w"])
    d2 = ArchitectureDescriptor(kind="TwoStream", widths=(3, 4), cross_connection="MotionToAppearance")
    model2 = perturbed(build_model(d2, Rng(0), dtype=np.float64))
    model2.forward((rgb, flow))
    assert np.any(model2.streams_backward(du_a, np.zeros_like(du_a))["mot1_w"])


def test_descriptor_validation():
    with pytest.raises(ValueError):
        ArchitectureDescriptor(kind="ThreeStream")
    with pytest.raises(ValueError):
        ArchitectureDescriptor(widths=())
    with pytest.raises(ValueError):
        ArchitectureDescriptor(kind="TwoStream", widths=(3, 3), se_reduction=4)
    d = ArchitectureDescriptor(kind="TwoStream", fusion="ConvexCombinationGated")
    assert ArchitectureDescriptor.from_dict(d.to_dict()) == d


def test_input_shape_checked():
    model = build_model(ArchitectureDescriptor())
    with pytest.raises(ValueError, match="input shape"):
        model.forward(np.zeros((1, 8, 16, 16, 2), dtype=np.float32))


def test_removal_mask_zeroes_captured_channel():
    model = build_model(ArchitectureDescriptor(), Rng(0))
    vids = generate_dataset(TaskMode.DYNAMIC_ONLY, 2, Rng(0))
    model.masks["block1"] = np.array([0, 1, 1, 1, 1, 1, 1, 0], dtype=np.float32)
    _, acts = model.forward(model_inputs(model, vids), capture=True)
    assert not np.any(acts["block1"][..., [0, 7]])


# ---------------------------------------------------------------- training

@pytest.fixture(scope="module")
def tiny_data():
    return generate_dataset(TaskMode.DYNAMIC_ONLY, 48, Rng(5))


def test_training_is_deterministic(tiny_data):
    cfg = TrainConfig(epochs=2, lr=0.05, batch=16)
    runs = []
    for _ in range(2):
        m = build_model(ArchitectureDescriptor(), Rng(1))
        runs.append(train(m, tiny_data, cfg, Rng(1).child("fit")))
    assert len(runs[0]) == 3
    for a, b in zip(*runs):
        for k in a.params:
            assert a.params[k].tobytes() == b.params[k].tobytes()


def test_zero_learning_rate_leaves_parameters(tiny_data):
    m = build_model(ArchitectureDescriptor(), Rng(1))
    before = {k: v.copy() for k, v in m.params.items()}
    train(m, tiny_data, TrainConfig(epochs=1, lr=0.0, batch=16), Rng(1))
    for k in before:
        assert np.array_equal(before[k], m.params[k])


def test_training_reduces_loss(tiny_data):
    m = build_model(ArchitectureDescriptor(widths=(4, 8)), Rng(1))
    x, y = model_inputs(m, tiny_data), model_targets(m, tiny_data)
    start = m.loss(x, y)
    train(m, tiny_data, TrainConfig(epochs=4, lr=0.1, batch=16), Rng(2))
    assert m.loss(x, y) < start


def test_resume_matches_uninterrupted(tiny_data):
    cfg = DropoutConfig("static", 0.5, period=2, warmup_epochs=1)
    full = build_model(ArchitectureDescriptor(), Rng(1))
    ck_full = train(full, tiny_data, TrainConfig(epochs=3, batch=16, dropout=cfg), Rng(1).child("fit"))
    part = build_model(ArchitectureDescriptor(), Rng(1))
    ck = train(part, tiny_data, TrainConfig(epochs=2, batch=16, dropout=cfg), Rng(1).child("fit"))[-1]
    resumed = ck.restore()
    ck2 = train(resumed, tiny_data, TrainConfig(epochs=1, batch=16, dropout=cfg), Rng(1).child("fit"),
                ck.velocity, ck.epoch, ck.meta["iteration"], ck.meta["static_probs"])
    for k in full.params:
        assert ck_full[-1].params[k].tobytes() == ck2[-1].params[k].tobytes()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_reports_batch(tiny_data):
    m = build_model(ArchitectureDescriptor(), Rng(1))
    with pytest.raises(NumericFailure) as info:
        train(m, tiny_data, TrainConfig(epochs=1, lr=1e30, batch=16), Rng(1))
    assert info.value.epoch == 1 and len(info.value.sample_ids) == 16


def test_evaluate_segmentation_iou():
    d = ArchitectureDescriptor(kind="TwoStream", head="segmenter")
    model = build_model(d, Rng(0))
    vids = generate_dataset(TaskMode.CAMOUFLAGE, 3, Rng(0))
    model.params["head_b"][:] = 100.0  # everything foreground
    iou = evaluate(model, vids)
    expect = np.mean([v.mask[0].sum() / v.mask[0].size for v in vids])
    assert iou == pytest.approx(expect)


# ---------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip_bitwise(tmp_path, tiny_data):
    m = build_model(ArchitectureDescriptor(kind="TwoStream", cross_connection="Bidirectional"), Rng(1))
    data = generate_dataset(TaskMode.DYNAMIC_ONLY, 16, Rng(0))
    ck = train(m, data, TrainConfig(epochs=1, batch=8), Rng(0))[-1]
    ck.masks["fusion"] = np.ones(32, dtype=np.float32)
    save_checkpoint(ck, tmp_path / "c")
    back = load_checkpoint(tmp_path / "c.json")
    assert back.descriptor == ck.descriptor and back.epoch == ck.epoch
    for k in ck.params:
        assert back.params[k].tobytes() == ck.params[k].tobytes()
        assert back.velocity[k].tobytes() == ck.velocity[k].tobytes()
    assert back.masks["fusion"].tobytes() == ck.masks["fusion"].tobytes()
    save_checkpoint(back, tmp_path / "d")
    assert (tmp_path / "c.bin").read_bytes() == (tmp_path / "d.bin").read_bytes()


def _golden_checkpoint(tmp_path):
    d = ArchitectureDescriptor(widths=(1,), num_classes=2, in_channels=1)
    m = build_model(d, video_shape=(2, 2, 2))
    names = list(m.params)
    assert names == ["block1_w", "block1_b", "head_w", "head_b"]
    manifest = {"version": 1, "descriptor": d.to_dict(), "epoch": 7, "video_shape": [2, 2, 2],
                "seeds": {}, "rng_state": None, "has_velocity": False, "masks": {},
                "params": [{"name": n, "shape": list(m.params[n].shape)} for n in names],
                "blob": "g.bin", "blob_bytes": 8 + 4 * 32}
    (tmp_path / "g.json").write_text(json.dumps(manifest))
    values = np.arange(32, dtype="<f4")
    (tmp_path / "g.bin").write_bytes(b"SDCK0001" + values.tobytes())
    return values


def test_checkpoint_golden_bytes_parse(tmp_path):
    values = _golden_checkpoint(tmp_path)
    ck = load_checkpoint(tmp_path / "g")
    assert ck.epoch == 7
    assert ck.params["block1_w"].shape == (3, 3, 3, 1, 1)
    assert ck.params["block1_w"].ravel().tolist() == values[:27].tolist()
    assert ck.params["block1_b"].tolist() == [27.0]
    assert ck.params["head_w"].ravel().tolist() == [28.0, 29.0]
    assert ck.params["head_b"].tolist() == [30.0, 31.0]
    assert MAGIC == bytes.fromhex("5344434b30303031")


def test_checkpoint_format_errors(tmp_path):
    _golden_checkpoint(tmp_path)
    raw = (tmp_path / "g.bin").read_bytes()
    (tmp_path / "g.bin").write_bytes(b"XXXX0001" + raw[8:])
    with pytest.raises(FormatError, match="magic"):
        load_checkpoint(tmp_path / "g")
    (tmp_path / "g.bin").write_bytes(raw[:-1])
    with pytest.raises(FormatError, match="truncated at byte offset 135"):
        load_checkpoint(tmp_path / "g")
    (tmp_path / "g.bin").write_bytes(raw + b"\0\0")
    with pytest.raises(FormatError, match="trailing data at byte offset 136"):
        load_checkpoint(tmp_path / "g")
    (tmp_path / "g.json").write_text('{"version": 2}')
    with pytest.raises(FormatError, match="version"):
        load_checkpoint(tmp_path / "g")
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "none")


def test_checkpoint_rejects_float64(tmp_path):
    m = build_model(ArchitectureDescriptor(widths=(2,)), dtype=np.float64)
    ck = train(m, generate_dataset(TaskMode.DYNAMIC_ONLY, 4, Rng(0)), TrainConfig(epochs=0), Rng(0))[0]
    with pytest.raises(ValueError, match="binary32"):
        save_checkpoint(ck, tmp_path / "x")


# ---------------------------------------------------------------- contract examples

def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def test_scalar_toy_forward_by_hand():
    d = ArchitectureDescriptor(widths=(1,), num_classes=2)
    m = perturbed(build_model(d, Rng(0), dtype=np.float64, video_shape=(1, 2, 2)))
    x = np.random.default_rng(0).random((1, 1, 2, 2, 3))
    w, b = m.params["block1_w"], m.params["block1_b"][0]
    acts = []
    for i in range(2):
        for j in range(2):
            total = b
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    r, c = i + di, j + dj
                    if 0 <= r < 2 and 0 <= c < 2:
                        for ch in range(3):
                            total += w[1, di + 1, dj + 1, ch, 0] * (x[0, 0, r, c, ch] - 0.5)
            acts.append(max(total, 0.0))
    pooled = sum(acts) / 4
    logits = [pooled * m.params["head_w"][0, k] + m.params["head_b"][k] for k in range(2)]
    np.testing.assert_allclose(m.forward(x)[0], logits, rtol=1e-12)


def test_zero_head_gives_bias_only_logits_and_duplicates_match():
    m = build_model(ArchitectureDescriptor(), Rng(0))
    m.params["head_w"][:] = 0
    m.params["head_b"][:] = np.arange(8)
    out = m.forward(np.zeros((2, 8, 16, 16, 3), dtype=np.float32))
    assert np.all(out == np.arange(8))
    vids = generate_dataset(TaskMode.MIXED, 2, Rng(1))
    x = model_inputs(m, [vids[0], vids[1], vids[0]])
    m2 = build_model(ArchitectureDescriptor(), Rng(0))
    o = m2.forward(x)
    assert o[0].tobytes() == o[2].tobytes()


def test_backward_is_linear_in_loss_scale():
    d = ArchitectureDescriptor(kind="TwoStream", widths=(3, 4), cross_connection="Bidirectional")
    m = perturbed(build_model(d, Rng(0), dtype=np.float64))
    x = model_inputs(m, generate_dataset(TaskMode.MIXED, 2, Rng(1)))
    dout = np.random.default_rng(0).normal(size=(2, d.num_classes))
    m.forward(x)
    g1 = {k: v.copy() for k, v in m.backward(dout).items()}
    m.forward(x)
    g2 = m.backward(2 * dout)
    for k in g1:
        np.testing.assert_allclose(g2[k], 2 * g1[k], rtol=1e-12, atol=1e-300)


def test_capture_contains_each_probe_layer_once():
    for d in (ArchitectureDescriptor(), ArchitectureDescriptor(kind="TwoStream")):
        m = build_model(d, Rng(0))
        _, acts = m.forward(model_inputs(m, generate_dataset(TaskMode.MIXED, 2, Rng(0))), capture=True)
        assert sorted(acts) == sorted(m.probe_layers)
        assert len(set(m.probe_layers)) == len(m.probe_layers)


def _fusion_params(rng, c, gated=False):
    out = 2 * c if gated else c
    return {"fuse_se_w1": rng.normal(size=(2 * c, c)), "fuse_se_b1": rng.normal(size=c),
            "fuse_se_w2": rng.normal(size=(c, out)), "fuse_se_b2": rng.normal(size=out),
            "fuse_sp_w": rng.normal(size=(1, 3, 3, 2 * c, 1)), "fuse_sp_b": rng.normal(size=1)}


def _conv3x3(x, w, b):
    """Same-padded 3x3 correlation over (B, H, W, C) by explicit offsets."""
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    h, wd = x.shape[1:3]
    out = np.full(x.shape[:3] + (w.shape[-1],), b, dtype=float)
    for i in range(3):
        for j in range(3):
            out += xp[:, i:i + h, j:j + wd] @ w[0, i, j]
    return out


def test_ccg_matches_direct_formula():
    rng = np.random.default_rng(3)
    c = 3
    p = _fusion_params(rng, c)
    u_a, u_m = rng.normal(size=(2, 4, 5, c)), rng.normal(size=(2, 4, 5, c))
    s = np.concatenate([u_a, u_m], -1).mean(axis=(1, 2))
    a = _sigmoid(np.maximum(s @ p["fuse_se_w1"] + p["fuse_se_b1"], 0) @ p["fuse_se_w2"] + p["fuse_se_b2"])
    z_a, z_m, a_c, _ = F.ccg_channel_attention(u_a, u_m, p)
    np.testing.assert_allclose(a_c, a, rtol=1e-12)
    np.testing.assert_allclose(z_a, a[:, None, None] * u_a, rtol=1e-12)
    np.testing.assert_allclose(z_m, (1 - a[:, None, None]) * u_m, rtol=1e-12)
    a_sp = _sigmoid(_conv3x3(np.concatenate([z_a, z_m], -1), p["fuse_sp_w"], p["fuse_sp_b"]))
    z, got, _ = F.ccg_spatial_attention(z_a, z_m, p)
    np.testing.assert_allclose(got, a_sp, rtol=1e-10)
    np.testing.assert_allclose(z, np.concatenate([a_sp * z_a, (1 - a_sp) * z_m], -1), rtol=1e-10)
    # forced gates
    half_a, half_m, _, _ = F.ccg_channel_attention(u_a, u_m, p, force_gate=0.5)
    np.testing.assert_array_equal(half_a, u_a / 2)
    np.testing.assert_array_equal(half_m, u_m / 2)
    z1, _, _ = F.ccg_spatial_attention(z_a, z_m, p, force_gate=1.0)
    np.testing.assert_array_equal(z1, np.concatenate([z_a, np.zeros_like(z_m)], -1))


def test_gated_matches_direct_formula():
    rng = np.random.default_rng(4)
    c = 3
    p = _fusion_params(rng, c, gated=True)
    u_a, u_m = rng.normal(size=(2, 4, 4, c)), rng.normal(size=(2, 4, 4, c))
    u = np.concatenate([u_a, u_m], -1)
    a = _sigmoid(np.maximum(u.mean(axis=(1, 2)) @ p["fuse_se_w1"] + p["fuse_se_b1"], 0)
                 @ p["fuse_se_w2"] + p["fuse_se_b2"])
    z, a_c, _ = F.gated_channel_attention(u_a, u_m, p)
    np.testing.assert_allclose(a_c, a, rtol=1e-12)
    # no convexity constraint between paired appearance and motion gates
    assert not np.allclose(a_c[:, :c] + a_c[:, c:], 1.0)
    np.testing.assert_allclose(z[..., :c], a[:, None, None, :c] * u_a, rtol=1e-12)
    a_sp = _sigmoid(_conv3x3(z, p["fuse_sp_w"], p["fuse_sp_b"]))
    zz, _, _ = F.gated_spatial_attention(z, p)
    np.testing.assert_allclose(zz, a_sp * z + z, rtol=1e-10)
    pos = np.abs(z)
    zp, _, _ = F.gated_spatial_attention(pos, p)
    assert np.all(zp >= pos) and np.all(zp <= 2 * pos)
    p["fuse_sp_b"][:] = -1e4
    z0, _, _ = F.gated_spatial_attention(z, p)
    np.testing.assert_array_equal(z0, z)
    zero = {k: np.zeros_like(v) for k, v in p.items()}
    zh, a0, _ = F.gated_channel_attention(u_a, u_m, zero)
    assert np.all(a0 == 0.5)
    np.testing.assert_array_equal(zh, u / 2)


def test_cross_connection_zero_gate_and_symmetry():
    rng = np.random.default_rng(5)
    c = 3
    w, b = rng.normal(size=(c, c)), rng.normal(size=c)
    p = {"x_ma_w": w, "x_ma_b": b, "x_ma_g": np.zeros(c),
         "x_am_w": w.copy(), "x_am_b": b.copy(), "x_am_g": np.zeros(c)}
    a, m = rng.normal(size=(2, 3, 3, c)), rng.normal(size=(2, 3, 3, c))
    a1, m1, _ = F.cross_connect(a, m, "MotionToAppearance", p)
    np.testing.assert_allclose(a1, a + 0.5 * (m @ w + b), rtol=1e-12)
    assert m1 is m
    a2, m2, _ = F.cross_connect(a, m, "Bidirectional", p)
    a3, m3, _ = F.cross_connect(m, a, "Bidirectional", p)
    np.testing.assert_allclose(a3, m2, rtol=1e-12)
    np.testing.assert_allclose(m3, a2, rtol=1e-12)


def test_single_sample_memorization():
    from sdbias.modelzoo import model_inputs as inputs
    vid = generate_dataset(TaskMode.MIXED, 1, Rng(8))
    m = build_model(ArchitectureDescriptor(num_classes=32), Rng(0))
    train(m, vid, TrainConfig(epochs=60, lr=0.05, batch=1, checkpoint_every=0), Rng(0))
    assert m.loss(inputs(m, vid), model_targets(m, vid)) < 0.01


def test_checkpoint_restore_forward_is_bitwise(tmp_path):
    d = ArchitectureDescriptor(kind="TwoStream", fusion="ConvexCombinationGated")
    m = perturbed(build_model(d, Rng(0)))
    data = generate_dataset(TaskMode.MIXED, 4, Rng(0))
    ck = train(m, data, TrainConfig(epochs=0), Rng(0))[0]
    save_checkpoint(ck, tmp_path / "c")
    back = load_checkpoint(tmp_path / "c").restore()
    x = model_inputs(m, data)
    assert back.forward(x).tobytes() == m.forward(x).tobytes()
