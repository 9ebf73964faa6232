import numpy as np
import pytest

from gradcheck import check, rand_param
from npov.engine import Tensor, backward, tape, tsum
from npov.engine.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from npov.engine.contextual import ContextualEncoder, masked_lm_pretrain
from npov.engine.layers import (
    Dense,
    Embedding,
    LSTMCell,
    LayerNorm,
    lstm_sequence,
    masked_blend,
)
from npov.engine.optim import Adam, clip_gradients


def as64(layer):
    for _, p in layer.params("x"):
        p.data = p.data.astype(np.float64)
    return layer


def flatten_sum(t):
    out = t
    while out.data.ndim > 0:
        out = tsum(out, axis=-1)
    return out


def test_dense_gradients():
    rng = np.random.default_rng(0)
    layer = as64(Dense(rng, 4, 3))
    x = rand_param(rng, (2, 4))
    check(lambda: flatten_sum(layer(x)), [x, layer.W, layer.b])


def test_lstm_cell_matches_direct_formula():
    rng = np.random.default_rng(1)
    cell = as64(LSTMCell(rng, 3, 2))
    x = np.array([[0.3, -0.2, 0.5]])
    h = np.array([[0.1, -0.4]])
    c = np.array([[0.2, 0.6]])
    h_new, c_new = cell.step(Tensor(x), Tensor(h), Tensor(c))

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    z = x @ cell.Wx.data + h @ cell.Wh.data + cell.b.data
    i, f, g, o = z[:, 0:2], z[:, 2:4], z[:, 4:6], z[:, 6:8]
    c_ref = sig(f) * c + sig(i) * np.tanh(g)
    h_ref = sig(o) * np.tanh(c_ref)
    assert np.allclose(c_new.data, c_ref, atol=1e-12)
    assert np.allclose(h_new.data, h_ref, atol=1e-12)


def test_lstm_cell_gradients():
    rng = np.random.default_rng(2)
    cell = as64(LSTMCell(rng, 3, 2))
    x = rand_param(rng, (2, 3))
    h0 = rand_param(rng, (2, 2))
    c0 = rand_param(rng, (2, 2))

    def loss():
        h, c = cell.step(x, h0, c0)
        h, c = cell.step(x, h, c)
        return flatten_sum(h) + flatten_sum(c)

    check(loss, [x, h0, c0, cell.Wx, cell.Wh, cell.b])


def test_lstm_sequence_mask_freezes_state():
    rng = np.random.default_rng(3)
    cell = LSTMCell(rng, 2, 3)
    xs = [Tensor(rng.uniform(-1, 1, (2, 2)).astype(np.float32)) for _ in range(3)]
    mask = np.array([[1, 1, 1], [1, 0, 0]], dtype=np.float32)
    h0 = Tensor(np.zeros((2, 3), np.float32))
    c0 = Tensor(np.zeros((2, 3), np.float32))
    hs = lstm_sequence(cell, xs, mask, h0, c0)
    assert np.allclose(hs[1].data[1], hs[0].data[1])
    assert np.allclose(hs[2].data[1], hs[0].data[1])
    assert not np.allclose(hs[1].data[0], hs[0].data[0])


def test_masked_blend():
    new = Tensor(np.full((2, 2), 5.0))
    old = Tensor(np.full((2, 2), 1.0))
    mask = np.array([[1.0], [0.0]])
    out = masked_blend(new, old, mask)
    assert np.allclose(out.data, [[5.0, 5.0], [1.0, 1.0]])


def test_layernorm_normalizes_and_backprops():
    rng = np.random.default_rng(4)
    ln = as64(LayerNorm(5))
    x = rand_param(rng, (3, 5))
    y = ln(x)
    assert np.allclose(y.data.mean(axis=-1), 0.0, atol=1e-6)
    assert np.allclose(y.data.std(axis=-1), 1.0, atol=1e-3)
    check(lambda: flatten_sum(ln(x)), [x, ln.gain, ln.bias])


def test_embedding_layer():
    rng = np.random.default_rng(5)
    emb = as64(Embedding(rng, 6, 3))
    ids = np.array([[0, 2], [5, 2]])
    check(lambda: flatten_sum(emb(ids)), [emb.table])


def test_adam_single_step_matches_formula():
    p = Tensor(np.array([1.0, -2.0], dtype=np.float64), requires_grad=True)
    g = np.array([0.5, -1.5])
    p.grad = g.copy()
    opt = Adam([p], lr=0.1)
    opt.step()
    # bias-corrected first step: m_hat = g, v_hat = g*g
    expect = np.array([1.0, -2.0]) - 0.1 * g / (np.abs(g) + 1e-8)
    assert np.allclose(p.data, expect, atol=1e-12)


def test_adam_two_steps_matches_formula():
    p = Tensor(np.array([0.5], dtype=np.float64), requires_grad=True)
    opt = Adam([p], lr=0.01)
    m = v = 0.0
    x = 0.5
    for t in range(1, 3):
        g = 2.0 * p.data[0]
        p.grad = np.array([g])
        gx = 2.0 * x
        m = 0.9 * m + 0.1 * gx
        v = 0.999 * v + 0.001 * gx * gx
        x = x - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        opt.step()
        assert np.allclose(p.data, [x], atol=1e-12)


def test_clip_gradients_scales_to_max_norm():
    a = Tensor(np.zeros(3), requires_grad=True)
    b = Tensor(np.zeros(4), requires_grad=True)
    a.grad = np.array([3.0, 0.0, 0.0])
    b.grad = np.array([0.0, 4.0, 0.0, 0.0])
    held = a.grad
    scale = clip_gradients([a, b], 1.0)
    assert scale == pytest.approx(1.0 / 5.0)  # pre-clip norm was 5
    total = np.sqrt(np.sum(a.grad**2) + np.sum(b.grad**2))
    assert total == pytest.approx(1.0)
    assert np.allclose(held, [3.0, 0.0, 0.0])  # original buffer untouched


def test_clip_gradients_below_threshold_is_noop():
    a = Tensor(np.zeros(2), requires_grad=True)
    a.grad = np.array([0.3, 0.4])
    scale = clip_gradients([a], 3.0)
    assert scale == pytest.approx(1.0)
    assert np.allclose(a.grad, [0.3, 0.4])


def test_checkpoint_round_trip(tmp_path):
    path = str(tmp_path / "model.ckpt")
    config = {"hidden": 16, "mode": "modular"}
    tensors = {
        "enc.W": np.arange(12, dtype=np.float32).reshape(3, 4),
        "bias": np.array([1.5, -2.5], dtype=np.float32),
        "scalarish": np.array(7.0, dtype=np.float32),
    }
    save_checkpoint(path, config, tensors)
    cfg2, t2 = load_checkpoint(path)
    assert cfg2 == config
    assert set(t2) == set(tensors)
    for k in tensors:
        assert t2[k].shape == tensors[k].shape
        assert np.array_equal(t2[k], tensors[k])


def test_checkpoint_save_is_deterministic(tmp_path):
    a, b = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
    tensors = {"w": np.ones((2, 2), np.float32)}
    save_checkpoint(a, {"x": 1}, tensors)
    save_checkpoint(b, {"x": 1}, tensors)
    assert open(a, "rb").read() == open(b, "rb").read()


def test_checkpoint_truncation_detected(tmp_path):
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(path, {}, {"w": np.ones((4, 4), np.float32)})
    blob = open(path, "rb").read()
    with open(path, "wb") as f:
        f.write(blob[:-7])
    with pytest.raises(CheckpointError, match="truncated or corrupt"):
        load_checkpoint(path)


def test_checkpoint_bad_magic(tmp_path):
    path = str(tmp_path / "model.ckpt")
    with open(path, "wb") as f:
        f.write(b"NOTMINE\x00" + b"\x00" * 32)
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(path)
    assert "WNCM1" in str(err.value)
    assert "NOTMIN" in str(err.value)  # the six bytes actually read


def test_checkpoint_bad_version(tmp_path):
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(path, {}, {})
    blob = bytearray(open(path, "rb").read())
    blob[6] = 99
    with open(path, "wb") as f:
        f.write(bytes(blob))
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(path)
    assert "99" in str(err.value) and "1" in str(err.value)


def test_contextual_encoder_shapes_and_pad_isolation():
    rng = np.random.default_rng(6)
    enc = ContextualEncoder(rng, vocab_size=11, dim=8, n_layers=2, max_len=16)
    ids = np.array([[1, 2, 3, 0], [4, 5, 0, 0]])
    mask = np.array([[1, 1, 1, 0], [1, 1, 0, 0]], dtype=np.float32)
    out = enc.encode(ids, mask)
    assert out.shape == (2, 4, 8)
    # changing a padded token must not leak into real positions
    ids2 = ids.copy()
    ids2[0, 3] = 9
    out2 = enc.encode(ids2, mask)
    assert np.allclose(out.data[0, :3], out2.data[0, :3], atol=1e-6)


def test_contextual_encoder_gradients():
    rng = np.random.default_rng(7)
    enc = ContextualEncoder(rng, vocab_size=7, dim=4, n_layers=1, max_len=8)
    params = [t for _, t in enc.params()]
    for p in params:
        p.data = p.data.astype(np.float64)
    ids = np.array([[1, 2, 3]])

    def loss():
        return flatten_sum(enc.lm_logits(enc.encode(ids)))

    check(loss, params)


def test_masked_pretrain_rejects_zero_prob():
    rng = np.random.default_rng(8)
    enc = ContextualEncoder(rng, vocab_size=7, dim=4, n_layers=1)
    with pytest.raises(ValueError):
        masked_lm_pretrain(enc, [[1, 2]], mask_id=5, pad_id=0, mask_prob=0.0, steps=1)


def test_masked_pretrain_reduces_loss():
    rng = np.random.default_rng(9)
    enc = ContextualEncoder(rng, vocab_size=10, dim=16, n_layers=1, max_len=8)
    seqs = [[1, 2, 3, 4], [4, 3, 2, 1], [5, 6, 7], [7, 6, 5]]
    losses = masked_lm_pretrain(enc, seqs, mask_id=9, pad_id=0,
                                mask_prob=0.3, steps=60, batch_size=4, seed=0)
    assert np.mean(losses[-10:]) < np.mean(losses[:10])
