from .checkpoint import dumps, load_checkpoint, loads, save_checkpoint
from .ops import (
    add,
    bce_loss,
    blend,
    dropout,
    l1_loss,
    layer_norm,
    linear,
    mul,
    multi_head_attention,
    permute,
    relu,
    reshape,
    scaled_dot_attention,
    sigmoid,
    sinusoidal_encoding,
    transformer_block,
)
from .optim import AdamState, ParamGroup, adam_step, step_lr
from .tensor import Tensor
