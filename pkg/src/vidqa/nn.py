"""Transformer building blocks on top of :mod:`vidqa.tensor`."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .tensor import DTYPE, Tensor, ops

NEG_INF = -1e9


class Module:
    """Parameter container with deterministic, insertion-ordered naming."""

    def __init__(self) -> None:
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, key, value):
        if isinstance(value, Tensor):
            self._params[key] = value
        elif isinstance(value, Module):
            self._modules[key] = value
        object.__setattr__(self, key, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix.rstrip("."), self
        for name, m in self._modules.items():
            yield from m.named_modules(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def set_trainable(self, flag: bool) -> None:
        for p in self.parameters():
            p.requires_grad = flag


class ModuleList(Module):
    def __init__(self, modules):
        super().__init__()
        self._items = []
        for i, m in enumerate(modules):
            setattr(self, str(i), m)
            self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    return (rng.standard_normal(shape) * std).astype(DTYPE)


class Linear(Module):
    """``y = x W^T + b`` with ``W`` stored as (out_features, in_features)."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True,
                 std: float | None = None):
        super().__init__()
        std = 1.0 / math.sqrt(in_features) if std is None else std
        self.weight = Tensor(normal(rng, (out_features, in_features), std), requires_grad=True)
        if bias:
            self.bias = Tensor(np.zeros(out_features, DTYPE), requires_grad=True)
        else:
            self.bias = None

    def __call__(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, ops.swap_last(self.weight))
        return y if self.bias is None else ops.add(y, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = Tensor(np.ones(dim, DTYPE), requires_grad=True)
        self.bias = Tensor(np.zeros(dim, DTYPE), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.weight, self.bias, self.eps)


class Embedding(Module):
    def __init__(self, num: int, dim: int, rng: np.random.Generator, std: float = 0.02):
        super().__init__()
        self.weight = Tensor(normal(rng, (num, dim), std), requires_grad=True)

    def __call__(self, ids) -> Tensor:
        return ops.embedding(self.weight, ids)


def sinusoidal_positions(n: int, dim: int) -> np.ndarray:
    """Fixed sin/cos encoding over a flat index, shape (n, dim)."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    i = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    enc = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return enc.astype(DTYPE)


def split_heads(x: Tensor, n_heads: int) -> Tensor:
    b, n, d = x.shape
    return ops.transpose(ops.reshape(x, (b, n, n_heads, d // n_heads)), (0, 2, 1, 3))


def merge_heads(x: Tensor) -> Tensor:
    b, h, n, dh = x.shape
    return ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (b, n, h * dh))


def attention(q: Tensor, k: Tensor, v: Tensor, n_heads: int, mask: np.ndarray | None = None):
    """Scaled dot-product attention over (B, N, D) inputs.

    ``mask`` is boolean, broadcastable to (B, heads, Nq, Nk), True where a
    query may look at a key. Returns the merged output and the weight tensor.
    """
    qh, kh, vh = split_heads(q, n_heads), split_heads(k, n_heads), split_heads(v, n_heads)
    dh = qh.shape[-1]
    scores = ops.scale(ops.matmul(qh, ops.swap_last(kh)), 1.0 / math.sqrt(dh))
    if mask is not None:
        scores = ops.add(scores, Tensor(np.where(mask, 0.0, NEG_INF).astype(DTYPE)))
    w = ops.softmax(scores)
    return merge_heads(ops.matmul(w, vh)), w


class MultiHeadAttention(Module):
    """Attention with separate query/key/value/output projections."""

    def __init__(self, dim: int, n_heads: int, rng: np.random.Generator):
        super().__init__()
        if dim % n_heads:
            raise ValueError(f"embed dim {dim} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.q_proj = Linear(dim, dim, rng)
        self.k_proj = Linear(dim, dim, rng)
        self.v_proj = Linear(dim, dim, rng)
        self.o_proj = Linear(dim, dim, rng)
        self.last_weights: np.ndarray | None = None

    def __call__(self, x: Tensor, context: Tensor | None = None, mask: np.ndarray | None = None) -> Tensor:
        context = x if context is None else context
        out, w = attention(self.q_proj(x), self.k_proj(context), self.v_proj(context), self.n_heads, mask)
        self.last_weights = w.data
        return self.o_proj(out)


class FeedForward(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ops.gelu(self.fc1(x)))


class EncoderBlock(Module):
    """Pre-norm self-attention block, optionally with a cross-attention sublayer."""

    def __init__(self, dim: int, n_heads: int, ffn_dim: int, rng: np.random.Generator, cross: bool = False):
        super().__init__()
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, n_heads, rng)
        if cross:
            self.ln_cross = LayerNorm(dim)
            self.cross_attn = MultiHeadAttention(dim, n_heads, rng)
        else:
            self.cross_attn = None
        self.ln2 = LayerNorm(dim)
        self.mlp = FeedForward(dim, ffn_dim, rng)

    def __call__(self, x: Tensor, mask=None, context: Tensor | None = None, context_mask=None) -> Tensor:
        x = ops.add(x, self.attn(self.ln1(x), mask=mask))
        if self.cross_attn is not None:
            x = ops.add(x, self.cross_attn(self.ln_cross(x), context=context, mask=context_mask))
        return ops.add(x, self.mlp(self.ln2(x)))
