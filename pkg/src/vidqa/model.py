"""End-to-end video question answering model and batching helpers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .decoder import Decoder, DecoderConfig, GenerationConfig, GenerationTrace, generate
from .encoder import EncoderConfig, TextEncoder, VideoEncoder
from .nn import Module
from .tensor import DTYPE, Tensor, ops
from .text import Vocab, detokenize, tokenize, tokenize_question
from .video import apply_mask, make_tube_mask

FREEZE_POLICIES = ("paper", "desk")


@dataclass
class Sample:
    """One training/eval example in model-ready form."""

    frames: np.ndarray  # (T, H, W, C) float32
    question: str
    answer: str
    keywords: tuple[str, ...] = ()
    category: str = ""
    domain: str = ""
    out_of_template: bool = False


@dataclass
class Batch:
    frames: np.ndarray       # (B, T, H, W, C)
    q_ids: np.ndarray        # (B, Lq) padded to max_question_len
    q_len: np.ndarray        # (B,)
    in_ids: np.ndarray       # (B, S) BOS + answer, padded
    target_ids: np.ndarray   # (B, S) answer + EOS, padded
    keyword: np.ndarray      # (B, S) bool
    valid: np.ndarray        # (B, S) bool

    def __len__(self) -> int:
        return self.frames.shape[0]


class VQAModel(Module):
    def __init__(self, enc_cfg: EncoderConfig, dec_cfg: DecoderConfig, vocab: Vocab, seed: int = 0):
        super().__init__()
        if enc_cfg.vocab_size != len(vocab) or dec_cfg.vocab_size != len(vocab):
            raise ValueError("encoder/decoder vocab sizes must match the vocabulary")
        if dec_cfg.prefix_len != enc_cfg.max_question_len or dec_cfg.prefix_dim != enc_cfg.embed_dim:
            raise ValueError("decoder prefix must match encoder question length and width")
        self.enc_cfg = enc_cfg
        self.dec_cfg = dec_cfg
        self.vocab = vocab
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.video_encoder = VideoEncoder(enc_cfg, np.random.default_rng(rng.integers(2**63)))
        self.text_encoder = TextEncoder(enc_cfg, np.random.default_rng(rng.integers(2**63)))
        self.decoder = Decoder(dec_cfg, np.random.default_rng(rng.integers(2**63)))
        self.freeze_policy = "desk"
        self.apply_freeze_policy("desk")

    # --- parameters ---------------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data for n, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        unknown = sorted(set(state) - set(own))
        missing = sorted(set(own) - set(state))
        if strict and (unknown or missing):
            raise KeyError(f"state mismatch: unknown={unknown} missing={missing}")
        for name, arr in state.items():
            if name not in own:
                continue
            if own[name].shape != arr.shape:
                raise ValueError(f"{name}: shape {arr.shape} vs model {own[name].shape}")
            own[name].data = np.array(arr, dtype=DTYPE)

    def trainable_parameters(self) -> dict[str, Tensor]:
        return {n: p for n, p in self.named_parameters() if p.requires_grad}

    def apply_freeze_policy(self, policy: str) -> None:
        """Set requires_grad per policy.

        ``paper``: video encoder interior frozen with cube projection and final
        norm trainable. ``desk``: whole video encoder trainable. Both train the
        text encoder, the decoder bridge, the output bias and LoRA adapters; the decoder base is
        always frozen.
        """
        if policy not in FREEZE_POLICIES:
            raise ValueError(f"unknown freeze policy {policy!r}; expected one of {FREEZE_POLICIES}")
        self.freeze_policy = policy
        self.video_encoder.set_trainable(True)
        if policy == "paper":
            self.video_encoder.blocks.set_trainable(False)
        self.text_encoder.set_trainable(True)
        self.decoder.set_trainable(False)
        for p in self.decoder.head_parameters():
            p.requires_grad = True
        for p in self.decoder.adapter_parameters():
            p.requires_grad = True

    # --- forward ------------------------------------------------------------
    def encode(self, frames: np.ndarray, q_ids: np.ndarray, q_len: np.ndarray, mask_ratio: float = 0.0,
               rng: np.random.Generator | None = None) -> Tensor:
        grid = self.video_encoder.embed(frames)
        tokens = grid.tokens
        if mask_ratio > 0.0:
            if rng is None:
                raise ValueError("tube masking needs an rng")
            masks = [make_tube_mask(grid.grid, mask_ratio, rng) for _ in range(frames.shape[0])]
            tokens, _ = apply_mask(tokens, grid.grid, masks)
        video = self.video_encoder(tokens)
        return self.text_encoder(q_ids, q_len, video)

    def __call__(self, batch: Batch, mask_ratio: float = 0.0, rng: np.random.Generator | None = None) -> Tensor:
        fused = self.encode(batch.frames, batch.q_ids, batch.q_len, mask_ratio, rng)
        return self.decoder(fused, batch.q_len, batch.in_ids)

    # --- batching -----------------------------------------------------------
    def make_batch(self, samples: Sequence[Sample]) -> Batch:
        v = self.vocab
        lq = self.enc_cfg.max_question_len
        qs = [tokenize_question(s.question, v, lq) for s in samples]
        q_ids = np.zeros((len(samples), lq), np.int64)
        for i, q in enumerate(qs):
            q_ids[i, : q.length] = q.ids
        answers = [tokenize(s.answer) for s in samples]
        s_len = max(len(a) for a in answers) + 1
        in_ids = np.full((len(samples), s_len), v.pad_id, np.int64)
        tgt = np.full_like(in_ids, v.pad_id)
        kw = np.zeros(in_ids.shape, bool)
        valid = np.zeros(in_ids.shape, bool)
        from .training import build_keyword_mask

        for i, (s, toks) in enumerate(zip(samples, answers)):
            ids = v.encode(toks)
            n = len(ids)
            in_ids[i, : n + 1] = [v.bos_id, *ids]
            tgt[i, : n + 1] = [*ids, v.eos_id]
            kw[i, :n] = build_keyword_mask(toks, s.keywords)
            valid[i, : n + 1] = True
        return Batch(
            frames=np.stack([s.frames for s in samples]).astype(DTYPE),
            q_ids=q_ids, q_len=np.array([q.length for q in qs]),
            in_ids=in_ids, target_ids=tgt, keyword=kw, valid=valid,
        )

    # --- inference ----------------------------------------------------------
    def fused_embedding(self, frames: np.ndarray, question: str) -> Tensor:
        q = tokenize_question(question, self.vocab, self.enc_cfg.max_question_len)
        ids = np.zeros((1, self.enc_cfg.max_question_len), np.int64)
        ids[0, : q.length] = q.ids
        fused = self.encode(frames[None], ids, np.array([q.length]))
        return ops.reshape(fused[:, : q.length, :], (q.length, self.enc_cfg.embed_dim))

    def generate(self, frames: np.ndarray, question: str, max_new_tokens: int = 16) -> GenerationTrace:
        gen = GenerationConfig(max_new_tokens=max_new_tokens, eos_id=self.vocab.eos_id)
        return generate(self.fused_embedding(frames, question), self.decoder, gen, self.vocab.bos_id)

    def answer(self, frames: np.ndarray, question: str, max_new_tokens: int = 16) -> str:
        trace = self.generate(frames, question, max_new_tokens)
        return detokenize(self.vocab.decode(trace.token_ids))
