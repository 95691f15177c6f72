"""Keyword-weighted BCE objective, training loop and checkpoint files."""

from __future__ import annotations

import io
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import Batch, Sample, VQAModel
from .tensor import DTYPE, Tape, Tensor, ops
from .tensor.optim import AdamState, adam_step
from .text import tokenize

log = logging.getLogger(__name__)

LAMBDA_GRID = (1, 2, 5, 10, 25, 50)
LOG_CLAMP = 1e-12
PAPER_LR = 2e-7
DESK_LR = 3e-4


class NonFiniteLossError(FloatingPointError):
    def __init__(self, batch_id: int, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch_id}")
        self.batch_id = batch_id
        self.epoch = epoch


@dataclass(frozen=True)
class LossConfig:
    lam: float = 1.0
    formulation: str = "bce"  # "bce" per-vocabulary binary CE, or "ce" softmax CE

    def __post_init__(self):
        if self.lam < 1:
            raise ValueError(f"keyword weight lambda must be >= 1, got {self.lam}")
        if self.formulation not in ("bce", "ce"):
            raise ValueError(f"unknown loss formulation {self.formulation!r}")


@dataclass
class TrainConfig:
    epochs: int = 60
    lr: float = DESK_LR
    batch_size: int = 16
    seed: int = 0
    freeze_policy: str = "paper"
    mask_ratio: float = 0.75
    lam: float = 1.0
    loss: str = "bce"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.mask_ratio < 1.0:
            raise ValueError("mask_ratio must be in [0, 1)")
        LossConfig(self.lam, self.loss)


# --- objective ----------------------------------------------------------

def build_keyword_mask(answer_tokens: Sequence[str], keywords: Iterable[str]) -> np.ndarray:
    """True where an answer token belongs to a keyword (multi-word keywords mark every word)."""
    toks = [t.lower() for t in answer_tokens]
    mask = np.zeros(len(toks), dtype=bool)
    for kw in keywords:
        parts = tokenize(kw)
        n = len(parts)
        if not n:
            continue
        for i in range(len(toks) - n + 1):
            if toks[i: i + n] == parts:
                mask[i: i + n] = True
    return mask


def token_weights(keyword: np.ndarray, valid: np.ndarray, lam: float) -> np.ndarray:
    w = np.where(keyword, DTYPE(lam), DTYPE(1.0)).astype(DTYPE)
    return np.where(valid, w, DTYPE(0.0)).astype(DTYPE)


def _per_token_bce(scores: Tensor, onehot: np.ndarray) -> Tensor:
    """Mean over the vocabulary of binary CE between sigmoid(scores) and one-hot targets."""
    log_p = ops.log(ops.clamp_min(ops.sigmoid(scores), LOG_CLAMP))
    log_q = ops.log(ops.clamp_min(ops.sigmoid(ops.scale(scores, -1.0)), LOG_CLAMP))
    y = Tensor(onehot)
    ll = ops.add(ops.mul(y, log_p), ops.mul(Tensor(1.0 - onehot), log_q))
    return ops.scale(ops.mean(ll, axis=-1), -1.0)


def _per_token_ce(scores: Tensor, onehot: np.ndarray) -> Tensor:
    return ops.scale(ops.sum(ops.mul(Tensor(onehot), ops.log_softmax(scores)), axis=-1), -1.0)


def weighted_token_loss(scores: Tensor, target_ids: np.ndarray, weights: np.ndarray,
                        formulation: str = "bce") -> Tensor:
    """Batched objective: mean over samples of ``(1/N_b) sum_i w_i * loss_i``.

    ``scores`` (B, S, V); ``weights`` (B, S) with zero on padding. N_b is the
    number of non-padding target tokens of sample b.
    """
    v = scores.shape[-1]
    onehot = np.eye(v, dtype=DTYPE)[target_ids]
    per_tok = _per_token_bce(scores, onehot) if formulation == "bce" else _per_token_ce(scores, onehot)
    n = np.maximum((weights > 0).sum(axis=-1, keepdims=True), 1).astype(DTYPE)
    per_sample = ops.sum(ops.mul(per_tok, Tensor(weights / n)), axis=-1)
    return ops.mean(per_sample)


def weighted_bce_loss(scores: Tensor, targets: np.ndarray, keyword_mask: np.ndarray, lam: float) -> Tensor:
    """``(1/N) sum_i w_i BCE_i`` over N answer tokens; ``w_i = lam`` on keyword tokens, else 1.

    ``scores`` (N, V) raw logits, ``targets`` (N, V) one-hot rows.
    """
    targets = np.asarray(targets)
    if targets.shape != scores.shape:
        raise ValueError(f"targets {targets.shape} vs scores {scores.shape}")
    if not (np.all((targets == 0) | (targets == 1)) and np.all(targets.sum(axis=-1) == 1)):
        raise ValueError("every target row must be one-hot")
    keyword_mask = np.asarray(keyword_mask, dtype=bool)
    if keyword_mask.shape != scores.shape[:1]:
        raise ValueError(f"keyword mask {keyword_mask.shape} vs {scores.shape[0]} tokens")
    LossConfig(lam)
    n, v = scores.shape
    ids = targets.argmax(axis=-1)[None, :]
    w = token_weights(keyword_mask, np.ones(n, bool), lam)[None, :]
    return weighted_token_loss(ops.reshape(scores, (1, n, v)), ids, w)


def batch_loss(model: VQAModel, batch: Batch, cfg: TrainConfig, rng: np.random.Generator) -> Tensor:
    logits = model(batch, mask_ratio=cfg.mask_ratio, rng=rng)
    w = token_weights(batch.keyword, batch.valid, cfg.lam)
    return weighted_token_loss(logits, batch.target_ids, w, cfg.loss)


# --- loop -----------------------------------------------------------------

def new_adam(cfg: TrainConfig) -> AdamState:
    return AdamState(lr=cfg.lr)


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def train_epoch(samples: Sequence[Sample], model: VQAModel, cfg: TrainConfig, state: AdamState,
                epoch: int = 0) -> list[float]:
    """One pass in a seed-determined order; returns the per-batch loss trace."""
    if not samples:
        raise ValueError("empty training set")
    order = epoch_order(len(samples), cfg.seed, epoch)
    mask_rng = np.random.default_rng([cfg.seed, epoch, 1])
    params = model.trainable_parameters()
    trace = []
    for b, start in enumerate(range(0, len(order), cfg.batch_size)):
        batch = model.make_batch([samples[i] for i in order[start: start + cfg.batch_size]])
        with Tape() as tape:
            loss = batch_loss(model, batch, cfg, mask_rng)
        value = float(loss.data)
        if not math.isfinite(value):
            raise NonFiniteLossError(b, epoch)
        tape.backward(loss, list(params.values()))
        adam_step(params, {n: p.grad for n, p in params.items()}, state)
        for p in params.values():
            p.grad = None
        trace.append(value)
    return trace


@dataclass
class TrainResult:
    epoch_losses: list[float] = field(default_factory=list)
    batch_losses: list[list[float]] = field(default_factory=list)
    steps: int = 0


def train(samples: Sequence[Sample], model: VQAModel, cfg: TrainConfig, state: AdamState | None = None,
          callback=None) -> TrainResult:
    model.apply_freeze_policy(cfg.freeze_policy)
    state = state or new_adam(cfg)
    result = TrainResult()
    for epoch in range(cfg.epochs):
        trace = train_epoch(samples, model, cfg, state, epoch)
        result.batch_losses.append(trace)
        result.epoch_losses.append(float(np.mean(trace)))
        result.steps = state.step
        log.info("epoch %d loss %.6f", epoch, result.epoch_losses[-1])
        if callback is not None and callback(epoch, result) is False:
            break
    return result


# --- checkpoints ----------------------------------------------------------

MAGIC = b"SVQA"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    config: dict
    step: int = 0
    seed: int = 0


def dump_config_text(config: dict) -> str:
    """Flat ``key = <json value>`` lines, keys sorted."""
    return "".join(f"{k} = {json.dumps(config[k], sort_keys=True)}\n" for k in sorted(config))


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        try:
            out[key.strip()] = json.loads(value.strip())
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: bad value for {key.strip()!r}: {exc.msg}") from None
    return out


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(ckpt.tensors)))
    for name in sorted(ckpt.tensors):
        arr = np.ascontiguousarray(ckpt.tensors[name], dtype="<f4")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes(order="C"))
    meta = dict(ckpt.config)
    meta["_step"] = ckpt.step
    meta["_seed"] = ckpt.seed
    text = dump_config_text(meta).encode("utf-8")
    buf.write(struct.pack("<I", len(text)))
    buf.write(text)
    return buf.getvalue()


def decode_checkpoint(data: bytes) -> Checkpoint:
    view = memoryview(data)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointFormatError("truncated checkpoint")
        chunk = view[pos: pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointFormatError("bad magic bytes; not a checkpoint")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = bytes(take(nlen)).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        size = int(np.prod(shape)) if rank else 1
        tensors[name] = np.frombuffer(bytes(take(4 * size)), dtype="<f4").reshape(shape).astype(DTYPE)
    (clen,) = struct.unpack("<I", take(4))
    config = parse_config_text(bytes(take(clen)).decode("utf-8"))
    if pos != len(view):
        raise CheckpointFormatError("trailing bytes after checkpoint")
    step = int(config.pop("_step", 0))
    seed = int(config.pop("_seed", 0))
    return Checkpoint(tensors=tensors, config=config, step=step, seed=seed)


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(ckpt))
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())


def train_config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
