"""Named parameter groups, Adam and the step learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import MissingGrad, ModelError
from .tensor import Tensor


class ParamGroup:
    """Ordered ``name -> Tensor`` map; a tensor is trainable iff it requires grad."""

    def __init__(self, tensors=None):
        self.tensors = {}
        for name, t in (tensors or {}).items():
            self.add(name, t.data, t.requires_grad)

    def add(self, name, data, trainable=True):
        if name in self.tensors:
            raise ModelError(f"duplicate parameter name {name!r}")
        self.tensors[name] = Tensor(np.array(data), requires_grad=trainable)
        return self.tensors[name]

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def names(self, prefix=""):
        return [n for n in self.tensors if n.startswith(prefix)]

    def is_trainable(self, name):
        return self.tensors[name].requires_grad

    def set_trainable(self, prefix, flag):
        for n in self.names(prefix):
            self.tensors[n].requires_grad = bool(flag)

    def freeze(self, prefix=""):
        self.set_trainable(prefix, False)

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def num_params(self, trainable_only=False):
        return sum(t.data.size for t in self.tensors.values() if t.requires_grad or not trainable_only)

    def copy(self):
        out = ParamGroup()
        for n, t in self.tensors.items():
            out.add(n, t.data.copy(), t.requires_grad)
        return out

    def astype(self, dtype):
        for t in self.tensors.values():
            t.data = t.data.astype(dtype)
        return self


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    lr0: float | None = None
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lr0 is None:
            self.lr0 = self.lr


def adam_step(params: ParamGroup, state: AdamState):
    """One bias-corrected Adam update of every trainable tensor, in place."""
    names = [n for n, t in params.items() if t.requires_grad]
    for n in names:
        if params[n].grad is None:
            raise MissingGrad(f"trainable parameter {n!r} has no gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    step = state.lr / c1
    for n in names:
        p = params[n]
        g = p.grad
        m = state.m.get(n)
        if m is None:
            m = state.m[n] = np.zeros_like(p.data)
            state.v[n] = np.zeros_like(p.data)
        v = state.v[n]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        denom = np.sqrt(v / c2)
        denom += state.eps
        p.data -= step * m / denom


def step_lr(state: AdamState, epoch: int, step_size: int, gamma: float):
    """Set ``lr = lr0 * gamma ** (epoch // step_size)``."""
    if step_size < 1 or not 0.0 < gamma <= 1.0:
        raise ModelError(f"invalid step schedule (step_size={step_size}, gamma={gamma})")
    state.lr = state.lr0 * gamma ** (epoch // step_size)
    return state.lr
