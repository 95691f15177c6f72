"""Masked video/text encoder: a video transformer plus a cross-attending text encoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import EncoderBlock, Embedding, LayerNorm, Linear, Module, ModuleList, sinusoidal_positions
from .tensor import ShapeError, Tensor, ops
from .text import QuestionTokens
from .video import CubeGrid, cube_embed, grid_dims


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    n_layers_video: int = 2
    n_layers_text: int = 2
    n_heads: int = 4
    embed_dim: int = 64
    ffn_dim: int = 128
    max_question_len: int = 24
    frame_shape: tuple[int, int, int] = (8, 32, 32)
    cube: tuple[int, int, int] = (2, 16, 16)
    channels: int = 3

    def __post_init__(self):
        if self.embed_dim % self.n_heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by n_heads {self.n_heads}")
        if self.n_layers_video < 0 or self.n_layers_text < 1 or self.n_heads < 1:
            raise ValueError("layer and head counts must be positive")
        grid_dims(self.frame_shape, self.cube)

    @property
    def grid(self) -> tuple[int, int, int]:
        return grid_dims(self.frame_shape, self.cube)

    @property
    def n_tokens(self) -> int:
        t, h, w = self.grid
        return t * h * w

    @property
    def cube_size(self) -> int:
        t, h, w = self.cube
        return t * h * w * self.channels


class VideoEncoder(Module):
    """Patch (cube) embedding, pre-norm transformer stack, final LayerNorm."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.patch_embed = Linear(cfg.cube_size, cfg.embed_dim, rng)
        self.blocks = ModuleList(EncoderBlock(cfg.embed_dim, cfg.n_heads, cfg.ffn_dim, rng)
                                 for _ in range(cfg.n_layers_video))
        self.norm = LayerNorm(cfg.embed_dim)
        self.pos_enc = sinusoidal_positions(cfg.n_tokens, cfg.embed_dim)

    def embed(self, frames: np.ndarray) -> CubeGrid:
        return cube_embed(frames, self.cfg.cube, self.patch_embed.weight, self.patch_embed.bias, self.pos_enc)

    def __call__(self, tokens: Tensor) -> Tensor:
        if tokens.shape[-2] == 0:
            raise ShapeError("video encoder received an empty token sequence")
        x = tokens
        for blk in self.blocks:
            x = blk(x)
        return self.norm(x)

    def interior_parameters(self) -> list[Tensor]:
        return [p for _, p in self.blocks.named_parameters()]


class TextEncoder(Module):
    """Bidirectional text transformer whose layers cross-attend to video features."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.word_embed = Embedding(cfg.vocab_size, cfg.embed_dim, rng, std=1.0)
        self.blocks = ModuleList(EncoderBlock(cfg.embed_dim, cfg.n_heads, cfg.ffn_dim, rng, cross=True)
                                 for _ in range(cfg.n_layers_text))
        self.norm = LayerNorm(cfg.embed_dim)
        self.pos_enc = sinusoidal_positions(cfg.max_question_len, cfg.embed_dim)

    def __call__(self, ids: np.ndarray, lengths: np.ndarray, video: Tensor) -> Tensor:
        """ids (B, L) padded, lengths (B,), video (B, Nv, D) -> fused (B, L, D)."""
        b, L = ids.shape
        if L > self.cfg.max_question_len:
            raise ShapeError(f"question length {L} exceeds max_question_len {self.cfg.max_question_len}")
        if video.shape[-2] == 0:
            raise ShapeError("text encoder received no video features")
        x = ops.add(self.word_embed(ids), Tensor(self.pos_enc[:L]))
        keys_ok = np.arange(L)[None, :] < np.asarray(lengths)[:, None]
        self_mask = keys_ok[:, None, None, :]
        # every question token sees every visible video token
        cross_mask = None
        for blk in self.blocks:
            x = blk(x, mask=self_mask, context=video, context_mask=cross_mask)
        return self.norm(x)

    def cross_attention_weights(self) -> list[np.ndarray]:
        return [blk.cross_attn.last_weights for blk in self.blocks]


def encode_video(tokens: Tensor, encoder: VideoEncoder) -> Tensor:
    """(N, D) or (B, N, D) visible tokens -> features of the same shape."""
    if tokens.ndim == 2:
        return ops.reshape(encoder(ops.reshape(tokens, (1,) + tokens.shape)), tokens.shape)
    return encoder(tokens)


def encode_text_fused(q: QuestionTokens, video: Tensor, encoder: TextEncoder) -> Tensor:
    """Single question (L,) against (N, D) video features -> (L, D) fused embedding."""
    if q.length > encoder.cfg.max_question_len:
        raise ShapeError(f"question length {q.length} exceeds max_question_len {encoder.cfg.max_question_len}")
    ids = np.asarray(q.ids[: q.length])[None, :]
    vid = ops.reshape(video, (1,) + video.shape) if video.ndim == 2 else video
    fused = encoder(ids, np.array([q.length]), vid)
    return ops.reshape(fused, fused.shape[1:])
