"""Central-difference gradient checks for the autograd ops."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


def numeric_grad(f, arrays, i, h=1e-5):
    """d f / d arrays[i] by central differences; ``f`` maps arrays to a float."""
    x = arrays[i]
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f(arrays)
        x[idx] = old - h
        fm = f(arrays)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def relative_error(a, b, floor=1e-5):
    """Largest elementwise ``|a - b| / max(|a|, |b|, floor)``.

    The floor sits above central-difference roundoff (about 1e-10 at
    h = 1e-5), so analytically zero gradients do not read as failures.
    """
    a, b = np.asarray(a), np.asarray(b)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def check_op(op, arrays, rng, h=1e-5):
    """Max relative error between autograd and numeric gradients of ``op``.

    ``op`` maps Tensors to a Tensor. The output is contracted with a fixed
    random weight so every Jacobian row is exercised. Inputs are float64.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    weight = None

    def scalar(arrs):
        nonlocal weight
        out = op(*[Tensor(a) for a in arrs]).data
        if weight is None:
            weight = rng.standard_normal(out.shape)
        return float(np.sum(out * weight))

    scalar(arrays)
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = op(*leaves)
    out.backward(weight)
    worst = 0.0
    for i, leaf in enumerate(leaves):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        worst = max(worst, relative_error(analytic, numeric_grad(scalar, arrays, i, h)))
    return worst


def _away_from(x, points, margin=1e-2):
    """Nudge entries of ``x`` off the kinks at ``points``."""
    for p in points:
        close = np.abs(x - p) < margin
        x[close] = p + np.copysign(2 * margin, x[close] - p + 1e-300)
    return x


def _block_params(rng, D, n_heads, ff):
    from .optim import ParamGroup

    pg = ParamGroup()
    names = {}
    for ln in ("ln1", "ln2"):
        names[f"b.{ln}.gamma"] = 1 + 0.1 * rng.standard_normal(D)
        names[f"b.{ln}.beta"] = 0.1 * rng.standard_normal(D)
    for w in "qkvo":
        names[f"b.attn.W{w}"] = rng.standard_normal((D, D)) / np.sqrt(D)
        names[f"b.attn.b{w}"] = 0.1 * rng.standard_normal(D)
    names["b.ffn.W1"] = rng.standard_normal((D, ff)) / np.sqrt(D)
    names["b.ffn.b1"] = 0.1 * rng.standard_normal(ff)
    names["b.ffn.W2"] = rng.standard_normal((ff, D)) / np.sqrt(ff)
    names["b.ffn.b2"] = 0.1 * rng.standard_normal(D)
    for n, v in names.items():
        pg.add(n, v)
    return pg, list(names)


def _bind(pg, names, tensors):
    """A params mapping whose listed entries are replaced by ``tensors``."""
    d = dict(pg.items())
    d.update(zip(names, tensors))
    return d


def op_cases():
    """``name -> factory(rng) -> (op, arrays)`` for every differentiable op."""
    from . import ops

    def add(rng):
        s = tuple(rng.integers(1, 5, size=rng.integers(1, 4)))
        b_shape = s[-1:] if rng.random() < 0.5 else s
        return ops.add, [rng.standard_normal(s), rng.standard_normal(b_shape)]

    def mul(rng):
        s = tuple(rng.integers(1, 5, size=rng.integers(1, 4)))
        return ops.mul, [rng.standard_normal(s), rng.standard_normal(s[-1:])]

    def reshape(rng):
        a, b = rng.integers(1, 5, size=2)
        return (lambda x: ops.reshape(x, (b, a))), [rng.standard_normal((a, b))]

    def permute(rng):
        s = tuple(rng.integers(1, 5, size=3))
        axes = tuple(rng.permutation(3))
        return (lambda x: ops.permute(x, axes)), [rng.standard_normal(s)]

    def linear(rng):
        B, L, I, O = rng.integers(1, 6, size=4)
        return ops.linear, [rng.standard_normal((B, L, I)), rng.standard_normal((I, O)), rng.standard_normal(O)]

    def relu(rng):
        return ops.relu, [_away_from(rng.standard_normal(tuple(rng.integers(1, 6, size=2))), [0.0])]

    def sigmoid(rng):
        return ops.sigmoid, [3 * rng.standard_normal(tuple(rng.integers(1, 6, size=2)))]

    def dropout(rng):
        seed = int(rng.integers(2**31))
        p = float(rng.uniform(0.1, 0.6))
        return (lambda x: ops.dropout(x, p, np.random.default_rng(seed))), [rng.standard_normal((3, 5))]

    def layer_norm(rng):
        s = (int(rng.integers(1, 4)), int(rng.integers(2, 8)))
        return ops.layer_norm, [rng.standard_normal(s), rng.standard_normal(s[-1]), rng.standard_normal(s[-1])]

    def attention(rng):
        B, h, L, d = rng.integers(1, 4, size=4)
        return ops.scaled_dot_attention, [rng.standard_normal((B, h, L, d)) for _ in range(3)]

    def mha(rng):
        n_heads = int(rng.integers(1, 3))
        D = n_heads * int(rng.integers(1, 4))
        pg, names = _block_params(rng, D, n_heads, 2 * D)
        attn = [n for n in names if ".attn." in n]
        x = rng.standard_normal((2, 3, D))
        op = lambda x, *w: ops.multi_head_attention(x, _bind(pg, attn, w), "b.attn", n_heads)
        return op, [x] + [pg[n].data for n in attn]

    def block(rng):
        n_heads = int(rng.integers(1, 3))
        D = n_heads * int(rng.integers(1, 3))
        pg, names = _block_params(rng, D, n_heads, 2 * D)
        x = rng.standard_normal((2, 3, D))
        op = lambda x, *w: ops.transformer_block(x, _bind(pg, names, w), "b", n_heads)
        return op, [x] + [pg[n].data for n in names]

    def l1(rng):
        s = tuple(rng.integers(1, 6, size=2))
        p = rng.standard_normal(s)
        t = p + _away_from(rng.standard_normal(s), [0.0], 0.05)
        return ops.l1_loss, [p, t]

    def bce(rng):
        s = tuple(rng.integers(1, 6, size=2))
        y = rng.integers(0, 2, size=s).astype(float)
        return (lambda p: ops.bce_loss(p, y)), [rng.uniform(0.05, 0.95, size=s)]

    def blend(rng):
        B, L, D = rng.integers(1, 5, size=3)
        mask = (rng.random((B, L, 1)) < 0.5).astype(float)
        return (lambda x, f: ops.blend(x, mask, f)), [rng.standard_normal((B, L, D)), rng.standard_normal(D)]

    return {
        "add": add, "mul": mul, "reshape": reshape, "permute": permute, "linear": linear,
        "relu": relu, "sigmoid": sigmoid, "dropout": dropout, "layer_norm": layer_norm,
        "scaled_dot_attention": attention, "multi_head_attention": mha, "transformer_block": block,
        "l1_loss": l1, "bce_loss": bce, "blend": blend,
    }


def run_suite(n_instances=20, seed=0):
    """``name -> worst relative error`` over ``n_instances`` random cases per op."""
    out = {}
    for k, (name, factory) in enumerate(op_cases().items()):
        rng = np.random.default_rng([seed, k])
        out[name] = max(check_op(*factory(rng), rng) for _ in range(n_instances))
    return out
