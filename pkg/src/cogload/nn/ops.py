"""Differentiable layers, attention and losses."""
from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeMismatch
from .tensor import Tensor, accumulate, as_tensor, node, unbroadcast

LN_EPS = 1e-5
BCE_CLAMP = 1e-7


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeMismatch(f"cannot add shapes {a.shape} and {b.shape}") from None

    def backward(g):
        accumulate(a, unbroadcast(g, a.shape))
        accumulate(b, unbroadcast(g, b.shape))

    return node(out, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeMismatch(f"cannot multiply shapes {a.shape} and {b.shape}") from None

    def backward(g):
        if a.requires_grad:
            accumulate(a, unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            accumulate(b, unbroadcast(g * a.data, b.shape))

    return node(out, (a, b), backward)


def reshape(x, shape):
    src = x.shape

    def backward(g):
        accumulate(x, g.reshape(src))

    return node(x.data.reshape(shape), (x,), backward)


def permute(x, axes):
    inv = np.argsort(axes)

    def backward(g):
        accumulate(x, g.transpose(inv))

    return node(x.data.transpose(axes), (x,), backward)


def linear(x, W, b=None):
    """``x @ W + b`` over the last axis of ``x``; ``W`` is (in, out)."""
    if x.shape[-1] != W.shape[0] or W.data.ndim != 2 or (b is not None and b.shape != (W.shape[1],)):
        raise ShapeMismatch(
            f"linear: x {x.shape}, W {W.shape}, b {None if b is None else b.shape}"
        )
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, W.shape[0])
    out = x2 @ W.data
    if b is not None:
        out = out + b.data
    parents = (x, W) if b is None else (x, W, b)

    def backward(g):
        g2 = g.reshape(-1, W.shape[1])
        if x.requires_grad:
            accumulate(x, (g2 @ W.data.T).reshape(x.shape))
        if W.requires_grad:
            accumulate(W, x2.T @ g2)
        if b is not None and b.requires_grad:
            accumulate(b, g2.sum(axis=0))

    return node(out.reshape(*lead, W.shape[1]), parents, backward)


def relu(x):
    pos = x.data > 0

    def backward(g):
        accumulate(x, g * pos)

    return node(x.data * pos, (x,), backward)


def sigmoid(x):
    z = x.data
    e = np.exp(-np.abs(z))
    s = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(z.dtype, copy=False)

    def backward(g):
        accumulate(x, g * s * (1.0 - s))

    return node(s, (x,), backward)


def dropout(x, p, rng, train=True):
    """Inverted dropout; identity when ``train`` is false or ``p == 0``."""
    if not train or p <= 0.0:
        return x
    draw = rng.random(x.shape, dtype=np.float32 if x.dtype == np.float32 else np.float64)
    keep = (draw >= p).astype(x.dtype) / (1.0 - p)

    def backward(g):
        accumulate(x, g * keep)

    return node(x.data * keep, (x,), backward)


def layer_norm(x, gamma, beta, eps=LN_EPS):
    """Standardize the last axis, then scale by ``gamma`` and shift by ``beta``."""
    n = x.shape[-1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise ShapeMismatch(f"layer_norm: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        if gamma.requires_grad:
            accumulate(gamma, (g * xhat).reshape(-1, n).sum(axis=0))
        if beta.requires_grad:
            accumulate(beta, g.reshape(-1, n).sum(axis=0))
        if x.requires_grad:
            gx = g * gamma.data
            gx = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
            accumulate(x, gx)

    return node(out, (x, gamma, beta), backward)


def softmax(z, axis=-1):
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def scaled_dot_attention(q, k, v):
    """``softmax(q k^T / sqrt(d)) v`` over the last two axes."""
    if q.shape != k.shape or k.shape[:-1] != v.shape[:-1]:
        raise ShapeMismatch(f"attention: q {q.shape}, k {k.shape}, v {v.shape}")
    scale = 1.0 / math.sqrt(q.shape[-1])
    p = softmax(np.matmul(q.data, np.swapaxes(k.data, -1, -2)) * scale)
    out = np.matmul(p, v.data)

    def backward(g):
        if v.requires_grad:
            accumulate(v, np.matmul(np.swapaxes(p, -1, -2), g))
        if q.requires_grad or k.requires_grad:
            gp = np.matmul(g, np.swapaxes(v.data, -1, -2))
            gs = p * (gp - (gp * p).sum(axis=-1, keepdims=True)) * scale
            if q.requires_grad:
                accumulate(q, np.matmul(gs, k.data))
            if k.requires_grad:
                accumulate(k, np.matmul(np.swapaxes(gs, -1, -2), q.data))

    return node(out.astype(q.dtype, copy=False), (q, k, v), backward)


def multi_head_attention(x, params, prefix, n_heads):
    """Project to heads, attend, concatenate, project back.

    ``params`` maps ``{prefix}.Wq``/``bq`` (likewise k, v, o) to tensors.
    """
    B, L, D = x.shape
    if D % n_heads:
        raise ShapeMismatch(f"model width {D} not divisible by {n_heads} heads")
    d = D // n_heads

    def heads(t):
        return permute(reshape(t, (B, L, n_heads, d)), (0, 2, 1, 3))

    q = heads(linear(x, params[f"{prefix}.Wq"], params[f"{prefix}.bq"]))
    k = heads(linear(x, params[f"{prefix}.Wk"], params[f"{prefix}.bk"]))
    v = heads(linear(x, params[f"{prefix}.Wv"], params[f"{prefix}.bv"]))
    att = reshape(permute(scaled_dot_attention(q, k, v), (0, 2, 1, 3)), (B, L, D))
    return linear(att, params[f"{prefix}.Wo"], params[f"{prefix}.bo"])


def transformer_block(x, params, prefix, n_heads, dropout_p=0.0, train=False, rng=None):
    """Pre-norm residual block: ``x + MHA(LN(x))`` then ``+ FFN(LN(.))``."""
    h = layer_norm(x, params[f"{prefix}.ln1.gamma"], params[f"{prefix}.ln1.beta"])
    h = multi_head_attention(h, params, f"{prefix}.attn", n_heads)
    x = add(x, dropout(h, dropout_p, rng, train))
    h = layer_norm(x, params[f"{prefix}.ln2.gamma"], params[f"{prefix}.ln2.beta"])
    h = relu(linear(h, params[f"{prefix}.ffn.W1"], params[f"{prefix}.ffn.b1"]))
    h = dropout(h, dropout_p, rng, train)
    h = linear(h, params[f"{prefix}.ffn.W2"], params[f"{prefix}.ffn.b2"])
    return add(x, dropout(h, dropout_p, rng, train))


def l1_loss(pred, target):
    """Mean absolute error over all elements; subgradient 0 at ties."""
    target = as_tensor(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"l1_loss: pred {pred.shape} vs target {target.shape}")
    diff = pred.data - target.data
    n = diff.size

    def backward(g):
        s = np.sign(diff) * (g / n)
        accumulate(pred, s)
        accumulate(target, -s)

    return node(np.abs(diff).mean(), (pred, target), backward)


def bce_loss(p, y):
    """Binary cross-entropy averaged over all outputs, ``p`` clamped to [1e-7, 1-1e-7]."""
    y = np.asarray(y.data if isinstance(y, Tensor) else y, dtype=p.dtype)
    if p.shape != y.shape:
        raise ShapeMismatch(f"bce_loss: p {p.shape} vs y {y.shape}")
    pc = np.clip(p.data, BCE_CLAMP, 1.0 - BCE_CLAMP)
    inside = (p.data >= BCE_CLAMP) & (p.data <= 1.0 - BCE_CLAMP)
    n = pc.size
    loss = -np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))

    def backward(g):
        accumulate(p, g * inside * ((pc - y) / (pc * (1.0 - pc))) / n)

    return node(np.asarray(loss, dtype=p.dtype), (p,), backward)


def blend(x, mask, fill):
    """Replace rows of ``x`` where ``mask`` is 1 by the vector ``fill``.

    ``mask`` is a constant array broadcastable against ``x``.
    """
    mask = np.asarray(mask, dtype=x.dtype)
    out = x.data * (1.0 - mask) + mask * fill.data

    def backward(g):
        if x.requires_grad:
            accumulate(x, g * (1.0 - mask))
        if fill.requires_grad:
            accumulate(fill, unbroadcast(g * mask, fill.shape))

    return node(out, (x, fill), backward)


def sinusoidal_encoding(length, d_model, dtype=np.float64):
    pos = np.arange(length)[:, None]
    i = np.arange(d_model)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d_model)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle)).astype(dtype)
