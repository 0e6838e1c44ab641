import math
import zlib

import numpy as np
import pytest

from cogload.errors import CheckpointError, MissingGrad, ModelError, ShapeMismatch
from cogload.nn import (
    AdamState,
    ParamGroup,
    Tensor,
    adam_step,
    bce_loss,
    dumps,
    l1_loss,
    layer_norm,
    linear,
    loads,
    load_checkpoint,
    multi_head_attention,
    save_checkpoint,
    scaled_dot_attention,
    step_lr,
    transformer_block,
)
from cogload.nn.gradcheck import _block_params, check_op, op_cases, relative_error


@pytest.mark.parametrize("name", sorted(op_cases()))
def test_gradients(name):
    factory = op_cases()[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    for _ in range(20):
        assert check_op(*factory(rng), rng) < 1e-4


def test_gradcheck_catches_wrong_gradient():
    def bad_square(x):
        from cogload.nn.tensor import accumulate, node

        return node(x.data**2, (x,), lambda g: accumulate(x, g * x.data))  # should be 2x

    rng = np.random.default_rng(0)
    assert check_op(bad_square, [rng.uniform(1, 2, 5)], rng) > 0.1


def test_relative_error_floor():
    assert relative_error([0.0], [1e-10]) == pytest.approx(1e-5)
    assert relative_error([1.0], [1.1]) == pytest.approx(0.1 / 1.1)


def test_linear_examples():
    x = Tensor([[1.0, 2.0]])
    assert linear(x, Tensor([[1.0], [1.0]]), Tensor([1.0])).data.tolist() == [[4.0]]
    xs = Tensor(np.random.default_rng(0).standard_normal((3, 4)))
    np.testing.assert_array_equal(linear(xs, Tensor(np.eye(4)), Tensor(np.zeros(4))).data, xs.data)
    with pytest.raises(ShapeMismatch):
        linear(xs, Tensor(np.eye(3)), Tensor(np.zeros(3)))


def test_attention_examples():
    rng = np.random.default_rng(1)
    v = rng.standard_normal((1, 1, 4, 3))
    q = Tensor(np.zeros((1, 1, 4, 3)))
    out = scaled_dot_attention(q, Tensor(rng.standard_normal((1, 1, 4, 3))), Tensor(v))
    np.testing.assert_allclose(out.data, np.broadcast_to(v.mean(axis=2, keepdims=True), v.shape))
    v1 = rng.standard_normal((2, 2, 1, 5))
    out = scaled_dot_attention(Tensor(rng.standard_normal((2, 2, 1, 5))), Tensor(rng.standard_normal((2, 2, 1, 5))), Tensor(v1))
    np.testing.assert_allclose(out.data, v1)
    with pytest.raises(ShapeMismatch):
        scaled_dot_attention(Tensor(np.zeros((1, 1, 2, 3))), Tensor(np.zeros((1, 1, 2, 4))), Tensor(np.zeros((1, 1, 2, 3))))


def test_mha_identity_single_head():
    rng = np.random.default_rng(2)
    D = 6
    pg, _ = _block_params(rng, D, 1, 12)
    for w in "qkvo":
        pg[f"b.attn.W{w}"].data = np.eye(D)
        pg[f"b.attn.b{w}"].data = np.zeros(D)
    x = Tensor(rng.standard_normal((2, 3, D)))
    got = multi_head_attention(x, pg, "b.attn", 1).data
    ref = scaled_dot_attention(Tensor(x.data[:, None]), Tensor(x.data[:, None]), Tensor(x.data[:, None])).data[:, 0]
    np.testing.assert_allclose(got, ref, atol=1e-12)
    with pytest.raises(ShapeMismatch):
        multi_head_attention(x, pg, "b.attn", 4)


def test_block_residual_identity_and_determinism():
    rng = np.random.default_rng(3)
    pg, names = _block_params(rng, 8, 2, 16)
    x = Tensor(rng.standard_normal((2, 3, 8)))
    a = transformer_block(x, pg, "b", 2, 0.1, train=False).data
    b = transformer_block(x, pg, "b", 2, 0.1, train=False).data
    np.testing.assert_array_equal(a, b)
    for n in names:
        pg[n].data = np.zeros_like(pg[n].data)
    np.testing.assert_array_equal(transformer_block(x, pg, "b", 2, 0.0).data, x.data)


def test_layer_norm_examples():
    beta = Tensor(np.arange(4.0))
    out = layer_norm(Tensor(np.full((2, 4), 3.0)), Tensor(np.ones(4)), beta)
    np.testing.assert_allclose(out.data, np.broadcast_to(beta.data, (2, 4)))
    x = np.random.default_rng(4).standard_normal((5, 16)) * 7 + 2
    out = layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16))).data
    np.testing.assert_allclose(out.mean(-1), 0, atol=1e-12)
    np.testing.assert_allclose(out.var(-1), 1, atol=1e-3)


def test_loss_examples():
    p = Tensor(np.random.default_rng(5).standard_normal((4, 40)))
    assert l1_loss(p, p.data.copy()).item() == 0
    assert l1_loss(p, p.data + np.where(np.arange(40) % 2, 1.0, -1.0)).item() == pytest.approx(1.0)
    assert bce_loss(Tensor(np.full((2, 3), 0.5)), np.ones((2, 3))).item() == pytest.approx(math.log(2))
    y = np.array([[1.0, 0.0, 1.0]])
    assert bce_loss(Tensor(y.copy()), y).item() < 1e-6
    with pytest.raises(ShapeMismatch):
        l1_loss(p, np.zeros((4, 39)))
    with pytest.raises(ShapeMismatch):
        bce_loss(Tensor(np.full((2, 3), 0.5)), np.ones((3, 2)))


def test_l1_gradient_is_sign_over_count():
    p = Tensor(np.array([[1.0, -2.0, 3.0, 0.5]]), requires_grad=True)
    l1_loss(p, np.zeros((1, 4))).backward()
    np.testing.assert_allclose(p.grad, np.sign(p.data) / 4)


def test_adam_first_step_is_lr():
    pg = ParamGroup()
    w = pg.add("w", np.array([0.3, -2.0, 5.0]))
    w.grad = np.array([1e-3, -4.0, 0.2])
    adam_step(pg, AdamState(lr=1e-4))
    np.testing.assert_allclose(w.data - np.array([0.3, -2.0, 5.0]), -1e-4 * np.sign([1e-3, -4.0, 0.2]), rtol=1e-4)


def test_adam_frozen_untouched_and_missing_grad():
    pg = ParamGroup()
    a = pg.add("a", np.ones(3))
    f = pg.add("f", np.ones(3), trainable=False)
    a.grad = np.ones(3)
    f.grad = np.ones(3)
    adam_step(pg, AdamState())
    np.testing.assert_array_equal(f.data, np.ones(3))
    a.grad = None
    with pytest.raises(MissingGrad):
        adam_step(pg, AdamState())


def test_adam_converges_on_square():
    pg = ParamGroup()
    w = pg.add("w", np.array([1.0]))
    st = AdamState(lr=0.01)
    for _ in range(500):
        w.grad = 2 * w.data
        adam_step(pg, st)
    assert abs(w.data[0]) < 0.05


def test_step_lr():
    st = AdamState(lr=1e-4)
    assert step_lr(st, 10, 250, 0.75) == 1e-4
    assert step_lr(st, 500, 250, 0.75) == pytest.approx(5.625e-5)
    assert step_lr(st, 999, 100, 1.0) == 1e-4
    with pytest.raises(ModelError):
        step_lr(st, 1, 0, 0.5)


def test_param_group_bookkeeping():
    pg = ParamGroup()
    pg.add("encoder.a", np.zeros((2, 3)))
    pg.add("head.b", np.zeros(4))
    with pytest.raises(ModelError):
        pg.add("head.b", np.zeros(1))
    pg.freeze("encoder.")
    assert not pg.is_trainable("encoder.a") and pg.is_trainable("head.b")
    assert pg.num_params() == 10 and pg.num_params(trainable_only=True) == 4


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    pg = ParamGroup()
    pg.add("x.W", rng.standard_normal((3, 4)).astype(np.float32))
    pg.add("x.b", rng.standard_normal(4).astype(np.float32), trainable=False)
    save_checkpoint(tmp_path / "c.ckpt", pg, {"k": 1})
    back, meta = load_checkpoint(tmp_path / "c.ckpt")
    assert meta == {"k": 1}
    for n in pg:
        np.testing.assert_array_equal(back[n].data, pg[n].data)
        assert back.is_trainable(n) == pg.is_trainable(n)
    assert dumps(back, meta) == (tmp_path / "c.ckpt").read_bytes()


def test_checkpoint_corrupt():
    pg = ParamGroup()
    pg.add("w", np.ones(3, np.float32))
    blob = dumps(pg)
    with pytest.raises(CheckpointError):
        loads(b"garbage" + blob)
    with pytest.raises(CheckpointError):
        loads(blob[:-2])
