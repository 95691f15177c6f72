"""Frozen causal decoder with low-rank adapters and greedy generation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import LayerNorm, Linear, Module, ModuleList, attention, normal, sinusoidal_positions
from .tensor import DTYPE, ShapeError, Tensor, ops

LORA_PRESETS = {
    "gpt2": ("c_attn", "c_proj"),
    "qwen": ("q_proj", "k_proj", "v_proj", "o_proj"),
}


class AdapterStateError(RuntimeError):
    pass


class LoraAdapter(Module):
    """``delta_W = (alpha / r) * B @ A`` with A (r, k) and B (d, r); B starts at zero."""

    def __init__(self, d: int, k: int, rank: int, alpha: float, rng: np.random.Generator, base_name: str = ""):
        super().__init__()
        if rank < 1 or rank > min(d, k):
            raise ValueError(f"LoRA rank {rank} must be in [1, min(d={d}, k={k})]")
        self.rank = rank
        self.alpha = float(alpha)
        self.base_name = base_name
        self.A = Tensor(normal(rng, (rank, k), 1.0 / math.sqrt(k)), requires_grad=True)
        self.B = Tensor(np.zeros((d, rank), DTYPE), requires_grad=True)

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank

    def delta(self) -> np.ndarray:
        return (DTYPE(self.scaling) * (self.B.data @ self.A.data)).astype(DTYPE)


def lora_linear(x: Tensor, weight: Tensor, adapter: LoraAdapter | None, bias: Tensor | None = None) -> Tensor:
    """``x W^T (+ b) + (alpha/r) x A^T B^T``."""
    y = ops.matmul(x, ops.swap_last(weight))
    if bias is not None:
        y = ops.add(y, bias)
    if adapter is not None:
        if adapter.B.shape[0] != weight.shape[0] or adapter.A.shape[1] != weight.shape[1]:
            raise ShapeError(f"adapter {adapter.B.shape}x{adapter.A.shape} does not fit weight {weight.shape}")
        low = ops.matmul(ops.matmul(x, ops.swap_last(adapter.A)), ops.swap_last(adapter.B))
        y = ops.add(y, ops.scale(low, adapter.scaling))
    return y


def merge_adapter(weight: np.ndarray, adapter: LoraAdapter) -> np.ndarray:
    weight = np.asarray(weight, dtype=DTYPE)
    if weight.shape != (adapter.B.shape[0], adapter.A.shape[1]):
        raise ShapeError(f"cannot merge adapter of shape {(adapter.B.shape[0], adapter.A.shape[1])} "
                         f"into weight {weight.shape}")
    return weight + adapter.delta()


class LoraLinear(Module):
    """A frozen linear layer with an optional adapter that can be merged in place."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, std: float = 0.125):
        super().__init__()
        # std is quoted for a 64-wide input and rescaled by fan-in
        self.base = Linear(in_features, out_features, rng, std=std * math.sqrt(64 / in_features))
        self.adapter: LoraAdapter | None = None
        self.adapter_enabled = True
        self.merged = False

    def attach(self, rank: int, alpha: float, rng: np.random.Generator, base_name: str = "") -> LoraAdapter:
        out_f, in_f = self.base.weight.shape
        self.adapter = LoraAdapter(out_f, in_f, rank, alpha, rng, base_name)
        return self.adapter

    def __call__(self, x: Tensor) -> Tensor:
        use = self.adapter if (self.adapter_enabled and not self.merged) else None
        return lora_linear(x, self.base.weight, use, self.base.bias)

    def merge(self) -> None:
        if self.adapter is None:
            return
        if self.merged:
            raise AdapterStateError("adapter already merged into the base weight")
        self.base.weight.data = merge_adapter(self.base.weight.data, self.adapter)
        self.merged = True

    def unmerge(self) -> None:
        if not self.merged:
            raise AdapterStateError("adapter is not merged")
        self.base.weight.data = (self.base.weight.data - self.adapter.delta()).astype(DTYPE)
        self.merged = False


@dataclass(frozen=True)
class DecoderConfig:
    vocab_size: int
    n_layers: int = 2
    n_heads: int = 4
    embed_dim: int = 64
    ffn_dim: int = 128
    max_seq_len: int = 48
    prefix_len: int = 24
    prefix_dim: int = 64
    style: str = "gpt2"
    lora_targets: tuple[str, ...] | None = None
    lora_rank: int = 8
    lora_alpha: float = 16.0
    token_std: float = 0.25
    base_std: float = 0.125

    def __post_init__(self):
        if self.embed_dim % self.n_heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by n_heads {self.n_heads}")
        if self.vocab_size < 2:
            raise ValueError("vocabulary must hold at least EOS and PAD")
        if self.style not in LORA_PRESETS:
            raise ValueError(f"unknown decoder style {self.style!r}")

    @property
    def targets(self) -> tuple[str, ...]:
        return self.lora_targets if self.lora_targets is not None else LORA_PRESETS[self.style]


@dataclass(frozen=True)
class GenerationConfig:
    max_new_tokens: int = 16
    eos_id: int = 3
    strategy: str = "greedy"

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.strategy != "greedy":
            raise ValueError(f"unsupported decoding strategy {self.strategy!r}")


class DecoderBlock(Module):
    def __init__(self, cfg: DecoderConfig, rng: np.random.Generator):
        super().__init__()
        d, f = cfg.embed_dim, cfg.ffn_dim
        self.n_heads = cfg.n_heads
        self.style = cfg.style
        self.ln_1 = LayerNorm(d)
        self.attn = Module()
        self.mlp = Module()
        if cfg.style == "gpt2":
            self.attn.c_attn = LoraLinear(d, 3 * d, rng, cfg.base_std)
            self.attn.c_proj = LoraLinear(d, d, rng, cfg.base_std)
            self.mlp.c_fc = LoraLinear(d, f, rng, cfg.base_std)
            self.mlp.c_proj = LoraLinear(f, d, rng, cfg.base_std)
        else:
            for name in ("q_proj", "k_proj", "v_proj", "o_proj"):
                setattr(self.attn, name, LoraLinear(d, d, rng, cfg.base_std))
            self.mlp.up_proj = LoraLinear(d, f, rng, cfg.base_std)
            self.mlp.down_proj = LoraLinear(f, d, rng, cfg.base_std)
        self.ln_2 = LayerNorm(d)

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        h = self.ln_1(x)
        if self.style == "gpt2":
            d = x.shape[-1]
            qkv = self.attn.c_attn(h)
            q, k, v = qkv[..., :d], qkv[..., d:2 * d], qkv[..., 2 * d:]
            a, _ = attention(q, k, v, self.n_heads, mask)
            x = ops.add(x, self.attn.c_proj(a))
            return ops.add(x, self.mlp.c_proj(ops.gelu(self.mlp.c_fc(self.ln_2(x)))))
        a, _ = attention(self.attn.q_proj(h), self.attn.k_proj(h), self.attn.v_proj(h), self.n_heads, mask)
        x = ops.add(x, self.attn.o_proj(a))
        return ops.add(x, self.mlp.down_proj(ops.gelu(self.mlp.up_proj(self.ln_2(x)))))


class Decoder(Module):
    """Causal transformer fed with a soft-token prefix; LM head tied to token embeddings.

    The fused question/video embedding is projected by ``bridge`` and placed
    before a BOS token and the answer tokens. ``head_bias`` is a trainable
    per-token output offset; without it a frozen tied head keeps the mean
    logit near zero and per-entry sigmoid scores cannot all go negative.
    """

    def __init__(self, cfg: DecoderConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.bridge = Linear(cfg.prefix_dim, cfg.embed_dim, rng)
        self.wte = Tensor(normal(rng, (cfg.vocab_size, cfg.embed_dim), cfg.token_std), requires_grad=True)
        self.blocks = ModuleList(DecoderBlock(cfg, rng) for _ in range(cfg.n_layers))
        self.ln_f = LayerNorm(cfg.embed_dim)
        # start at the log-odds of a uniform one-hot target
        prior = -math.log(max(cfg.vocab_size - 1, 1))
        self.head_bias = Tensor(np.full(cfg.vocab_size, prior, DTYPE), requires_grad=True)
        self.pos_enc = sinusoidal_positions(cfg.max_seq_len, cfg.embed_dim)
        adapter_rng = np.random.default_rng(rng.integers(2**63))
        for name, mod in list(self.named_modules()):
            if isinstance(mod, LoraLinear) and name.rsplit(".", 1)[-1] in cfg.targets:
                mod.attach(cfg.lora_rank, cfg.lora_alpha, adapter_rng, base_name=name + ".base.weight")

    def lora_layers(self) -> list[tuple[str, LoraLinear]]:
        return [(n, m) for n, m in self.named_modules() if isinstance(m, LoraLinear) and m.adapter is not None]

    def head_parameters(self) -> list[Tensor]:
        """Trainable non-adapter tensors: the prefix bridge and the output bias."""
        return [*self.bridge.parameters(), self.head_bias]

    def adapter_parameters(self) -> list[Tensor]:
        return [p for _, m in self.lora_layers() for p in (m.adapter.A, m.adapter.B)]

    def set_adapters_enabled(self, flag: bool) -> None:
        for _, m in self.lora_layers():
            m.adapter_enabled = flag

    def merge_adapters(self) -> None:
        for _, m in self.lora_layers():
            m.merge()

    def unmerge_adapters(self) -> None:
        for _, m in self.lora_layers():
            m.unmerge()

    def causal_mask(self, prefix_lengths: np.ndarray, seq_len: int) -> np.ndarray:
        lp = self.cfg.prefix_len
        pos = np.arange(seq_len)
        causal = pos[None, :] <= pos[:, None]
        key_ok = (pos[None, :] >= lp) | (pos[None, :] < np.asarray(prefix_lengths)[:, None])
        return (causal[None, :, :] & key_ok[:, None, :])[:, None, :, :]

    def __call__(self, prefix: Tensor, prefix_lengths: np.ndarray, input_ids: np.ndarray) -> Tensor:
        """prefix (B, Lp, Dp) padded to prefix_len; input_ids (B, S) -> logits (B, S, V)."""
        b, lp, _ = prefix.shape
        if lp != self.cfg.prefix_len:
            raise ShapeError(f"prefix length {lp} != configured prefix_len {self.cfg.prefix_len}")
        s = input_ids.shape[1]
        total = lp + s
        if total > self.cfg.max_seq_len:
            raise ShapeError(f"sequence length {total} exceeds max_seq_len {self.cfg.max_seq_len}")
        x = ops.concat([self.bridge(prefix), ops.embedding(self.wte, input_ids)], axis=1)
        x = ops.add(x, Tensor(self.pos_enc[:total]))
        mask = self.causal_mask(prefix_lengths, total)
        for blk in self.blocks:
            x = blk(x, mask)
        h = self.ln_f(x[:, lp:, :])
        return ops.add(ops.matmul(h, ops.swap_last(self.wte)), self.head_bias)


def pad_prefix(fused: Tensor, prefix_len: int) -> tuple[Tensor, int]:
    """(L, D) fused embedding -> (1, prefix_len, D) zero-padded, plus L."""
    L, d = fused.shape
    if L > prefix_len:
        raise ShapeError(f"prefix of {L} tokens exceeds prefix_len {prefix_len}")
    x = ops.reshape(fused, (1, L, d))
    if L < prefix_len:
        x = ops.concat([x, Tensor(np.zeros((1, prefix_len - L, d), DTYPE))], axis=1)
    return x, L


def decode_forward(prefix: Tensor, answer_ids, decoder: Decoder, bos_id: int = 2) -> np.ndarray:
    """Next-token scores (V,) after ``answer_ids`` given an (L, D) fused prefix."""
    padded, L = pad_prefix(prefix, decoder.cfg.prefix_len)
    ids = np.asarray([[bos_id, *answer_ids]], dtype=np.int64)
    logits = decoder(padded, np.array([L]), ids)
    return logits.data[0, -1].copy()


@dataclass
class GenerationTrace:
    token_ids: list[int] = field(default_factory=list)
    steps: list[tuple[int, float]] = field(default_factory=list)


def generate(prefix: Tensor, decoder: Decoder, gen: GenerationConfig = GenerationConfig(),
             bos_id: int = 2) -> GenerationTrace:
    """Greedy decoding; ties go to the lowest token id; EOS is not emitted."""
    trace = GenerationTrace()
    room = decoder.cfg.max_seq_len - decoder.cfg.prefix_len - 1
    for _ in range(min(gen.max_new_tokens, room)):
        scores = decode_forward(prefix, trace.token_ids, decoder, bos_id)
        tok = int(np.argmax(scores))
        trace.steps.append((tok, float(scores[tok])))
        if tok == gen.eos_id:
            break
        trace.token_ids.append(tok)
    return trace
