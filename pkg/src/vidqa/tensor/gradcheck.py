"""Central-difference gradient verification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import ops
from .core import DTYPE, Tape, Tensor


def grad_check(
    fn: Callable[..., Tensor],
    input_shapes: Sequence[tuple[int, ...]],
    rng: np.random.Generator,
    h: float = 1e-3,
    inputs: Sequence[np.ndarray] | None = None,
) -> float:
    """Max over inputs of ``|analytic - numeric| / max(1e-8, |analytic| + |numeric|)``.

    Norms are taken per input tensor. The output is contracted against a fixed
    random probe so every output entry contributes; the probe is applied in
    float64 on the numeric side so only the op itself runs at float32.
    """
    if inputs is None:
        inputs = [rng.standard_normal(s).astype(DTYPE) for s in input_shapes]
    xs = [Tensor(x.copy(), requires_grad=True) for x in inputs]

    with Tape() as tape:
        out = fn(*xs)
        probe = rng.standard_normal(out.shape)
        loss = ops.sum(ops.mul(out, Tensor(probe)))
    tape.backward(loss, xs)

    def objective(arrays) -> float:
        y = fn(*[Tensor(a) for a in arrays]).data.astype(np.float64)
        return float(np.sum(y * probe))

    worst = 0.0
    for i, x in enumerate(xs):
        analytic = x.grad.astype(np.float64)
        numeric = np.zeros_like(analytic)
        base = [t.data.copy() for t in xs]
        flat = base[i].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + DTYPE(h)
            up = objective(base)
            flat[j] = orig - DTYPE(h)
            down = objective(base)
            flat[j] = orig
            numeric.reshape(-1)[j] = (up - down) / (2.0 * h)
        err = np.linalg.norm(analytic - numeric) / max(1e-8, np.linalg.norm(analytic) + np.linalg.norm(numeric))
        worst = max(worst, float(err))
    return worst


@dataclass(frozen=True)
class CheckCase:
    name: str
    fn: Callable[..., Tensor]
    shapes: tuple[tuple[int, ...], ...]
    h: float = 1e-3
    sample: Callable[[np.random.Generator, tuple[int, ...]], np.ndarray] | None = None

    def inputs(self, rng: np.random.Generator) -> list[np.ndarray] | None:
        if self.sample is None:
            return None
        return [self.sample(rng, s).astype(DTYPE) for s in self.shapes]


def _positive(rng: np.random.Generator, shape) -> np.ndarray:
    return 0.5 + np.abs(rng.standard_normal(shape))


def _away_from_zero(rng: np.random.Generator, shape) -> np.ndarray:
    """Entries at least 0.2 from zero, so a kink at 0 is never straddled."""
    x = rng.standard_normal(shape)
    return np.sign(x) * (0.2 + np.abs(x))


def _fixed_ids(vocab: int, n: int, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, vocab, size=n)


def primitive_cases() -> list[CheckCase]:
    ids = _fixed_ids(6, 5)
    gain_bias = lambda x, g, b: ops.layer_norm(x, g, b)  # noqa: E731
    return [
        CheckCase("matmul", ops.matmul, ((4, 3), (3, 5))),
        CheckCase("batched_matmul", ops.matmul, ((2, 3, 4), (2, 4, 3))),
        CheckCase("add_broadcast", ops.add, ((3, 4), (4,))),
        CheckCase("sub", ops.sub, ((3, 4), (3, 4))),
        CheckCase("mul_broadcast", ops.mul, ((2, 3, 4), (3, 1))),
        CheckCase("scale", lambda a: ops.scale(a, -2.5), ((3, 4),)),
        CheckCase("transpose", lambda a: ops.transpose(a, (1, 2, 0)), ((2, 3, 4),)),
        CheckCase("reshape", lambda a: ops.reshape(a, (6, 4)), ((2, 3, 4),)),
        CheckCase("concat", lambda a, b: ops.concat([a, b], axis=1), ((3, 2), (3, 4))),
        CheckCase("getitem", lambda a: a[:, 1:3], ((4, 5),)),
        CheckCase("sum_axis", lambda a: ops.sum(a, axis=1), ((3, 4),)),
        CheckCase("mean", lambda a: ops.mean(a, axis=-1, keepdims=True), ((3, 4),)),
        CheckCase("softmax", ops.softmax, ((3, 6),)),
        CheckCase("log_softmax", ops.log_softmax, ((3, 6),)),
        CheckCase("sigmoid", ops.sigmoid, ((3, 5),)),
        CheckCase("gelu", ops.gelu, ((3, 5),)),
        CheckCase("layer_norm", gain_bias, ((4, 8), (8,), (8,))),
        CheckCase("embedding", lambda w: ops.embedding(w, ids), ((6, 4),)),
        CheckCase("log", ops.log, ((3, 5),), sample=_positive),
        CheckCase("clamp_min", lambda a: ops.clamp_min(a, 0.0), ((3, 5),), sample=_away_from_zero),
    ]


def loss_cases() -> list[CheckCase]:
    """Scalar losses; a wider step keeps float32 rounding of the loss value below the tolerance."""
    from ..training import weighted_bce_loss

    targets = np.eye(5, dtype=DTYPE)[[1, 4, 0]]
    kw = np.array([False, True, False])
    return [
        CheckCase("weighted_bce_lambda10",
                  lambda s: weighted_bce_loss(s, targets, kw, lam=10.0), ((3, 5),), h=1e-2),
        CheckCase("weighted_bce_lambda1",
                  lambda s: weighted_bce_loss(s, targets, kw, lam=1.0), ((3, 5),), h=1e-2),
    ]


def broken_case() -> CheckCase:
    """A deliberately wrong backward rule; the harness must flag it."""
    from .core import make_result

    def bad_sigmoid(a: Tensor) -> Tensor:
        s = 1.0 / (1.0 + np.exp(-a.data))
        return make_result(s.astype(DTYPE), (a,), lambda g: (g * s,), "bad_sigmoid")

    return CheckCase("injected_bug_sigmoid", bad_sigmoid, ((3, 4),))


def run_suite(cases: Sequence[CheckCase], seeds: Sequence[int], tol: float = 1e-3) -> list[tuple[str, float, bool]]:
    rows = []
    for case in cases:
        worst = 0.0
        for s in seeds:
            rng = np.random.default_rng(s)
            worst = max(worst, grad_check(case.fn, case.shapes, rng, h=case.h, inputs=case.inputs(rng)))
        rows.append((case.name, worst, worst < tol))
    return rows
