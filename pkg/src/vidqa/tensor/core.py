"""Dense float32 tensors and a tape-based reverse-mode differentiator.

Operations record themselves on the innermost active :class:`Tape` whenever at
least one input requires a gradient. With no tape active every op is a plain
value computation, which is how inference runs.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float32
DEBUG = os.environ.get("VIDQA_DEBUG", "") not in ("", "0")

_uids = itertools.count()
_tape_stack: list["Tape"] = []


class ShapeError(ValueError):
    """Operand shapes do not conform for an op."""


class VocabularyError(IndexError):
    """An embedding lookup index falls outside the table."""


class DetachedLossError(RuntimeError):
    """backward() was asked for a loss that the tape never produced."""


class Tensor:
    """A row-major float32 array with an optional gradient."""

    __slots__ = ("data", "requires_grad", "grad", "name", "uid", "tape", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=DTYPE)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self.uid = next(_uids)
        self.tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self.shape)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> dict["Tensor", np.ndarray]:
        if self.tape is None:
            raise DetachedLossError("tensor was not produced on any tape")
        return self.tape.backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # arithmetic sugar; implementations live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not a primitive")
        return ops.scale(self, 1.0 / float(other))

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, idx):
        from . import ops
        return ops.getitem(self, idx)

    @property
    def T(self):
        from . import ops
        return ops.swap_last(self)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        return ops.transpose(self, axes or None)

    def sum(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


def _raise_item(shape):
    raise ShapeError(f"item() needs a single-element tensor, got shape {shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Node:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    op: str


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; ops executed inside the block are recorded.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _tape_stack.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, inputs: tuple[Tensor, ...], output: Tensor, backward, op: str) -> None:
        self.nodes.append(Node(inputs, output, backward, op))
        self._produced.add(output.uid)
        output.tape = self

    def backward(self, loss: Tensor, params: Sequence[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
        """Propagate d(loss)/d(.) to every leaf that requires a gradient.

        Leaf ``.grad`` buffers are overwritten, not accumulated. When ``params``
        is given, any of them the loss does not depend on receives a zero grad.
        Returns a mapping leaf -> gradient.
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.uid not in self._produced:
            raise DetachedLossError("loss is detached from this tape")

        pending: dict[int, np.ndarray] = {loss.uid: np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for node in reversed(self.nodes):
            g = pending.pop(node.output.uid, None)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if gi.shape != inp.data.shape:
                    raise ShapeError(f"{node.op}: grad shape {gi.shape} vs input {inp.data.shape}")
                if inp.uid not in self._produced:
                    leaves[inp.uid] = inp
                prev = pending.get(inp.uid)
                pending[inp.uid] = gi if prev is None else prev + gi

        out: dict[Tensor, np.ndarray] = {}
        for uid, leaf in leaves.items():
            g = np.ascontiguousarray(pending[uid], dtype=DTYPE)
            leaf.grad = g
            out[leaf] = g
        for p in params or ():
            if p.requires_grad and p not in out:
                p.grad = np.zeros_like(p.data)
                out[p] = p.grad
        return out


def active_tape() -> Tape | None:
    return _tape_stack[-1] if _tape_stack else None


def make_result(data: np.ndarray, inputs: tuple[Tensor, ...], backward, op: str) -> Tensor:
    """Wrap an op's output and record it on the active tape if needed."""
    out = Tensor(data)
    if DEBUG and not np.all(np.isfinite(out.data)):
        if all(np.all(np.isfinite(t.data)) for t in inputs):
            raise FloatingPointError(f"{op} produced non-finite values from finite inputs")
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(inputs, out, backward, op)
    return out


def backward(loss: Tensor, params: Sequence[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    if loss.tape is None:
        raise DetachedLossError("loss is detached from every tape")
    return loss.tape.backward(loss, params)
