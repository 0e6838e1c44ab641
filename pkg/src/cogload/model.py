"""Transformer encoder with reconstruction and classification heads.

A model maps a batch of token sequences ``(B, 3, n_features)`` through a
linear input projection, ``n_blocks`` pre-norm transformer blocks and a
flatten, then an FC head. The pre-training head regresses the 40 values
of the masked token; the downstream head emits three sigmoid
probabilities, one per segment of the sequence.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, EmptyCorpus, LabelOutOfRange, MissingEncoder, ShapeMismatch
from .nn import (
    AdamState,
    ParamGroup,
    Tensor,
    adam_step,
    bce_loss,
    blend,
    dropout,
    l1_loss,
    linear,
    load_checkpoint,
    relu,
    reshape,
    save_checkpoint,
    sigmoid,
    sinusoidal_encoding,
    step_lr,
    transformer_block,
)
from .nn.ops import add
from .tokenizer import SEQ_LEN, draw_mask_indices

log = logging.getLogger(__name__)

ENCODER = "encoder"
PRETRAIN_HEAD = "pretrain_head"
CLS_HEAD = "cls_head"


@dataclass
class EncoderConfig:
    n_blocks: int = 4
    d_model: int = 64
    n_heads: int = 4
    dropout_p: float = 0.1
    positional_encoding: bool = False
    ff_mult: int = 4
    n_features: int = 40
    mask_token: str = "zeros"  # or "learned"

    def validate(self):
        if self.n_blocks < 1:
            raise ConfigError("encoder needs at least one block")
        if self.d_model < 1 or self.n_heads < 1 or self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} must be a positive multiple of n_heads={self.n_heads}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError("dropout_p must lie in [0, 1)")
        if self.mask_token not in ("zeros", "learned"):
            raise ConfigError(f"unknown mask_token {self.mask_token!r}")


@dataclass
class HeadConfig:
    fc_sizes: tuple = (256, 128)
    out_dim: int = 40
    final_activation: str = "none"  # or "sigmoid"
    dropout_p: float = 0.1

    def validate(self):
        if self.out_dim < 1 or any(s < 1 for s in self.fc_sizes):
            raise ConfigError(f"invalid head sizes {self.fc_sizes} -> {self.out_dim}")
        if self.final_activation not in ("none", "sigmoid"):
            raise ConfigError(f"unknown final activation {self.final_activation!r}")


def pretrain_head(n_features=40):
    return HeadConfig((256, 128), n_features, "none")


def downstream_head(fc_sizes=(32, 16)):
    return HeadConfig(tuple(fc_sizes), SEQ_LEN, "sigmoid")


HEAD_PRESETS = {
    "default": (32, 16),
    "A1": (32, 13, 8),
    "A2": (32, 13),
    "A3": (32,),
}


@dataclass
class TrainRunConfig:
    batch_size: int = 64
    epochs: int = 1000
    lr: float = 1e-4
    scheduler: tuple | None = None  # (step_size, gamma)
    seed: int = 0
    freeze_encoder: bool = True
    redraw_mask: bool = True
    dtype: str = "float32"

    def validate(self):
        if self.batch_size < 1 or self.epochs < 0 or self.lr <= 0:
            raise ConfigError(f"invalid training config {self}")


@dataclass
class Model:
    encoder: EncoderConfig
    head: HeadConfig
    params: ParamGroup
    head_prefix: str = PRETRAIN_HEAD
    _pe: np.ndarray | None = field(default=None, repr=False)

    @property
    def dtype(self):
        return next(iter(self.params.tensors.values())).dtype

    def config_dict(self):
        return {"encoder": asdict(self.encoder), "head": asdict(self.head), "head_prefix": self.head_prefix}

    def encode(self, x, train=False, rng=None, mask_index=None):
        """Encoder output flattened to ``(B, 3 * d_model)``."""
        enc, p = self.encoder, self.params
        x = Tensor(np.asarray(x, dtype=self.dtype))
        if x.data.ndim != 3 or x.shape[2] != enc.n_features:
            raise ShapeMismatch(f"expected (B, L, {enc.n_features}) input, got {x.shape}")
        B, L, _ = x.shape
        if mask_index is not None and enc.mask_token == "learned":
            onehot = (np.arange(L)[None, :] == np.asarray(mask_index)[:, None])[..., None]
            x = blend(x, onehot, p[f"{ENCODER}.mask_embedding"])
        h = linear(x, p[f"{ENCODER}.input_proj.W"], p[f"{ENCODER}.input_proj.b"])
        if enc.positional_encoding:
            h = add(h, Tensor(sinusoidal_encoding(L, enc.d_model, self.dtype)))
        for i in range(enc.n_blocks):
            h = transformer_block(h, p.tensors, f"{ENCODER}.blocks.{i}", enc.n_heads, enc.dropout_p, train, rng)
        return reshape(h, (B, L * enc.d_model))

    def run_head(self, h, train=False, rng=None):
        p, hp = self.params, self.head_prefix
        for i in range(len(self.head.fc_sizes)):
            h = relu(linear(h, p[f"{hp}.fc{i}.W"], p[f"{hp}.fc{i}.b"]))
            h = dropout(h, self.head.dropout_p, rng, train)
        out = linear(h, p[f"{hp}.out.W"], p[f"{hp}.out.b"])
        return sigmoid(out) if self.head.final_activation == "sigmoid" else out

    def forward(self, x, train=False, rng=None, mask_index=None):
        if train and rng is None:
            raise ValueError("training-mode forward needs an rng for dropout")
        return self.run_head(self.encode(x, train, rng, mask_index), train, rng)


def _uniform(rng, fan_in, shape, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _add_linear(params, name, n_in, n_out, rng, dtype):
    params.add(f"{name}.W", _uniform(rng, n_in, (n_in, n_out), dtype))
    params.add(f"{name}.b", np.zeros(n_out, dtype=dtype))


def init_encoder(params, enc: EncoderConfig, rng, dtype):
    D = enc.d_model
    _add_linear(params, f"{ENCODER}.input_proj", enc.n_features, D, rng, dtype)
    if enc.mask_token == "learned":
        params.add(f"{ENCODER}.mask_embedding", np.zeros(enc.n_features, dtype=dtype))
    for i in range(enc.n_blocks):
        b = f"{ENCODER}.blocks.{i}"
        for ln in ("ln1", "ln2"):
            params.add(f"{b}.{ln}.gamma", np.ones(D, dtype=dtype))
            params.add(f"{b}.{ln}.beta", np.zeros(D, dtype=dtype))
        for proj in "qkvo":
            params.add(f"{b}.attn.W{proj}", _uniform(rng, D, (D, D), dtype))
            params.add(f"{b}.attn.b{proj}", np.zeros(D, dtype=dtype))
        params.add(f"{b}.ffn.W1", _uniform(rng, D, (D, enc.ff_mult * D), dtype))
        params.add(f"{b}.ffn.b1", np.zeros(enc.ff_mult * D, dtype=dtype))
        params.add(f"{b}.ffn.W2", _uniform(rng, enc.ff_mult * D, (enc.ff_mult * D, D), dtype))
        params.add(f"{b}.ffn.b2", np.zeros(D, dtype=dtype))


def init_head(params, head: HeadConfig, prefix, n_in, rng, dtype):
    for i, size in enumerate(head.fc_sizes):
        _add_linear(params, f"{prefix}.fc{i}", n_in, size, rng, dtype)
        n_in = size
    _add_linear(params, f"{prefix}.out", n_in, head.out_dim, rng, dtype)


def build_model(enc: EncoderConfig, head: HeadConfig, rng, head_prefix=None, dtype="float32") -> Model:
    enc.validate()
    head.validate()
    if head_prefix is None:
        head_prefix = CLS_HEAD if head.final_activation == "sigmoid" else PRETRAIN_HEAD
    params = ParamGroup()
    init_encoder(params, enc, rng, dtype)
    init_head(params, head, head_prefix, SEQ_LEN * enc.d_model, rng, dtype)
    return Model(enc, head, params, head_prefix)


def head_dims(model: Model):
    """Layer widths of the head, input first."""
    hp = model.head_prefix
    dims = [model.params[f"{hp}.fc0.W" if model.head.fc_sizes else f"{hp}.out.W"].shape[0]]
    for i in range(len(model.head.fc_sizes)):
        dims.append(model.params[f"{hp}.fc{i}.W"].shape[1])
    dims.append(model.params[f"{hp}.out.W"].shape[1])
    return dims


def _as_array(seqs, dtype):
    if isinstance(seqs, np.ndarray):
        return seqs.astype(dtype, copy=False)
    return np.stack([s.values() for s in seqs]).astype(dtype)


def _batches(rng, n, batch_size):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def pretrain(corpus, cfg: TrainRunConfig, enc: EncoderConfig | None = None, head: HeadConfig | None = None,
             model: Model | None = None, callback=None):
    """Masked-token reconstruction training.

    Each epoch shuffles the corpus, masks one random token per sequence
    (re-drawn every epoch unless ``cfg.redraw_mask`` is false), and
    minimizes the L1 error between the head output and the masked token.

    Returns ``(model, curve)`` with the mean loss of every epoch.
    """
    cfg.validate()
    if len(corpus) == 0:
        raise EmptyCorpus("pre-training corpus is empty")
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    if model is None:
        enc = enc or EncoderConfig()
        head = head or pretrain_head(enc.n_features)
        model = build_model(enc, head, np.random.default_rng(seeds[0]), dtype=cfg.dtype)
    X = _as_array(corpus, model.dtype)
    if X.shape[1:] != (SEQ_LEN, model.encoder.n_features):
        raise ShapeMismatch(f"corpus has shape {X.shape}")
    rng = np.random.default_rng(seeds[1])
    state = AdamState(lr=cfg.lr)
    masks = draw_mask_indices(rng, len(X))
    curve = []
    for epoch in range(cfg.epochs):
        if cfg.redraw_mask and epoch > 0:
            masks = draw_mask_indices(rng, len(X))
        total = 0.0
        for idx in _batches(rng, len(X), cfg.batch_size):
            m = masks[idx]
            xb = X[idx].copy()
            rows = np.arange(len(idx))
            target = xb[rows, m].copy()
            xb[rows, m] = 0.0
            model.params.zero_grad()
            loss = l1_loss(model.forward(xb, train=True, rng=rng, mask_index=m), target)
            loss.backward()
            adam_step(model.params, state)
            total += loss.item() * len(idx)
        curve.append(total / len(X))
        if callback:
            callback(epoch, curve[-1])
    return model, curve


def transfer(pretrained: Model, head: HeadConfig | None = None, freeze: bool = True, rng=None,
             head_prefix: str = CLS_HEAD) -> Model:
    """Copy the encoder of ``pretrained`` under a freshly initialized head."""
    head = head or downstream_head()
    head.validate()
    names = pretrained.params.names(f"{ENCODER}.")
    if not names:
        raise MissingEncoder("pretrained parameters contain no encoder tensors")
    rng = rng if rng is not None else np.random.default_rng(0)
    params = ParamGroup()
    dtype = pretrained.dtype
    for n in names:
        params.add(n, pretrained.params[n].data.copy(), not freeze)
    init_head(params, head, head_prefix, SEQ_LEN * pretrained.encoder.d_model, rng, dtype)
    return Model(pretrained.encoder, head, params, head_prefix)


def _check_labels(y):
    y = np.asarray(y)
    if y.ndim != 2 or y.shape[1] != SEQ_LEN:
        raise ShapeMismatch(f"labels must be (N, {SEQ_LEN}), got {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise LabelOutOfRange("downstream labels must be 0 or 1")
    return y


def encoder_frozen(model: Model):
    names = model.params.names(f"{ENCODER}.")
    return bool(names) and not any(model.params.is_trainable(n) for n in names)


def train_downstream(X, y, cfg: TrainRunConfig, model: Model, callback=None):
    """BCE training of ``model`` on sequences ``X`` with per-segment labels ``y``.

    ``X`` is a ``(N, 3, n_features)`` array or a list of TokenSequence.
    A frozen encoder acts as a fixed feature extractor in eval mode, so
    its output is computed once; otherwise the whole model trains with
    dropout everywhere. ``cfg.scheduler = (step_size, gamma)`` applies the
    step decay at the start of each epoch.
    """
    cfg.validate()
    y = _check_labels(y)
    X = _as_array(X, model.dtype)
    if len(X) != len(y):
        raise ShapeMismatch(f"{len(X)} sequences but {len(y)} label rows")
    if len(X) == 0:
        raise EmptyCorpus("downstream training set is empty")
    y = y.astype(model.dtype)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[1])
    state = AdamState(lr=cfg.lr)
    frozen = encoder_frozen(model)
    feats = model.encode(X).data if frozen else None
    curve = []
    for epoch in range(cfg.epochs):
        if cfg.scheduler:
            step_lr(state, epoch, *cfg.scheduler)
        total = 0.0
        for idx in _batches(rng, len(X), cfg.batch_size):
            model.params.zero_grad()
            if frozen:
                out = model.run_head(Tensor(feats[idx]), train=True, rng=rng)
            else:
                out = model.forward(X[idx], train=True, rng=rng)
            loss = bce_loss(out, y[idx])
            loss.backward()
            adam_step(model.params, state)
            total += loss.item() * len(idx)
        curve.append(total / len(X))
        if callback:
            callback(epoch, curve[-1])
    return model, curve


def predict_proba(model: Model, X, batch_size=1024):
    X = _as_array(X, model.dtype)
    if len(X) == 0:
        return np.zeros((0, SEQ_LEN))
    return np.concatenate([model.forward(X[i:i + batch_size]).data for i in range(0, len(X), batch_size)])


def threshold(probs):
    """Sigmoid outputs to labels; 0.5 itself maps to 1."""
    return (np.asarray(probs) >= 0.5).astype(int)


def predict_sequence(model: Model, seq):
    x = seq.values()[None] if hasattr(seq, "values") else np.asarray(seq)[None]
    return tuple(int(v) for v in threshold(model.forward(x).data[0]))


def model_from_params(params: ParamGroup, meta) -> Model:
    """Rebuild a :class:`Model` from checkpoint parameters and metadata."""
    try:
        cfg = meta["model"]
        enc = EncoderConfig(**cfg["encoder"])
        h = dict(cfg["head"])
        h["fc_sizes"] = tuple(h["fc_sizes"])
        return Model(enc, HeadConfig(**h), params, cfg["head_prefix"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"checkpoint metadata lacks model config: {exc}") from None


def save_model(path, model: Model, meta=None):
    """Checkpoint ``model`` with its architecture under ``meta["model"]``."""
    save_checkpoint(path, model.params, {**(meta or {}), "model": model.config_dict()})


def load_model(path) -> Model:
    params, meta = load_checkpoint(path)
    return model_from_params(params, meta)
