"""Layer building blocks on top of :mod:`fedlayers.autodiff.tensor`."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from .rng import RngStream
from .tensor import Tensor


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


class Module:
    """Container with deterministic parameter naming.

    Parameters, buffers and submodules are discovered in attribute
    insertion order, so two structurally identical modules always list
    their parameters identically.
    """

    training: bool = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, list) and value and isinstance(value[0], Module):
                for i, m in enumerate(value):
                    yield from m.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in getattr(self, "_buffers", ()):
            yield f"{prefix}{name}", getattr(self, name)
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{name}.")
            elif isinstance(value, list) and value and isinstance(value[0], Module):
                for i, m in enumerate(value):
                    yield from m.named_buffers(f"{prefix}{name}.{i}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, list) and value and isinstance(value[0], Module):
                for m in value:
                    yield from m.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = np.zeros_like(p.data)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


def _uniform(init: RngStream, name: str, shape: tuple[int, ...], bound: float) -> np.ndarray:
    return init.child(name).uniform(-bound, bound, size=shape)


class Linear(Module):
    """``y = x @ weight + bias`` with fan-in scaled uniform initialization."""

    def __init__(self, in_features: int, out_features: int, init: RngStream, name: str, bias: bool = True):
        bound = 1.0 / math.sqrt(in_features)
        self.weight = parameter(_uniform(init, name + ".weight", (in_features, out_features), bound))
        self.bias = parameter(_uniform(init, name + ".bias", (out_features,), bound)) if bias else None
        self.in_features = in_features
        self.out_features = out_features

    def forward(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class BatchNorm1d(Module):
    def __init__(self, features: int, momentum: float = 0.1, eps: float = 1e-5):
        self.weight = parameter(np.ones(features))
        self.bias = parameter(np.zeros(features))
        self.running_mean = np.zeros(features)
        self.running_var = np.ones(features)
        self._buffers = ("running_mean", "running_var")
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return T.batch_norm(
            x, self.weight, self.bias, self.running_mean, self.running_var,
            training=self.training, momentum=self.momentum, eps=self.eps,
        )


class LayerNorm(Module):
    def __init__(self, features: int, eps: float = 1e-5):
        self.weight = parameter(np.ones(features))
        self.bias = parameter(np.zeros(features))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.weight, self.bias, self.eps)


class Dropout(Module):
    def __init__(self, rate: float, rng: RngStream | None = None):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        if not self.training or self.rate == 0.0:
            return x
        return T.dropout(x, self.rate, self.rng.generator, training=True)


class MultiHeadAttention(Module):
    """Scaled dot-product self-attention over the token axis of ``n x t x e``."""

    def __init__(self, dim: int, heads: int, init: RngStream, name: str):
        if dim % heads:
            raise ValueError(f"embedding dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.head_dim = dim // heads
        self.query = Linear(dim, dim, init, name + ".query")
        self.key = Linear(dim, dim, init, name + ".key")
        self.value = Linear(dim, dim, init, name + ".value")
        self.out = Linear(dim, dim, init, name + ".out")
        self.last_weights: np.ndarray | None = None

    def _split(self, x: Tensor, n: int, t: int) -> Tensor:
        return x.reshape(n, t, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def forward(self, x: Tensor) -> Tensor:
        n, t, e = x.shape
        q = self._split(self.query(x), n, t)
        k = self._split(self.key(x), n, t)
        v = self._split(self.value(x), n, t)
        scores = T.matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(self.head_dim))
        weights = T.softmax(scores, axis=-1)
        self.last_weights = weights.data
        ctx = T.matmul(weights, v).transpose(0, 2, 1, 3).reshape(n, t, e)
        return self.out(ctx)


class TransformerBlock(Module):
    """Post-norm encoder block: attention and a 4x GELU feedforward, each
    wrapped in a residual connection followed by layer norm."""

    def __init__(self, dim: int, heads: int, init: RngStream, name: str,
                 dropout: float = 0.0, dropout_rng: RngStream | None = None, expansion: int = 4):
        self.attention = MultiHeadAttention(dim, heads, init, name + ".attention")
        self.norm1 = LayerNorm(dim)
        self.ffn_in = Linear(dim, expansion * dim, init, name + ".ffn_in")
        self.ffn_out = Linear(expansion * dim, dim, init, name + ".ffn_out")
        self.norm2 = LayerNorm(dim)
        self.dropout = Dropout(dropout, dropout_rng)

    def forward(self, x: Tensor) -> Tensor:
        x = self.norm1(x + self.dropout(self.attention(x)))
        h = self.ffn_out(self.dropout(T.gelu(self.ffn_in(x))))
        return self.norm2(x + self.dropout(h))
