"""Word-level tokenisation and the shared question/answer vocabulary."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

import numpy as np

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"
SPECIALS = (PAD, UNK, BOS, EOS)


def tokenize(text: str) -> list[str]:
    """Lowercase and split into alphanumeric words and single punctuation marks."""
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens: Iterable[str]) -> str:
    out = ""
    for tok in tokens:
        if out and (tok[0].isalnum()):
            out += " "
        out += tok
    return out


@dataclass(frozen=True)
class QuestionTokens:
    ids: np.ndarray
    length: int

    @property
    def attention_mask(self) -> np.ndarray:
        return np.arange(len(self.ids)) < self.length


class Vocab:
    """Closed word vocabulary. Ids 0..3 are the specials pad/unk/bos/eos."""

    def __init__(self, words: Iterable[str]):
        self.itos: list[str] = list(SPECIALS)
        seen = set(self.itos)
        for w in words:
            if w not in seen:
                seen.add(w)
                self.itos.append(w)
        self.stoi = {w: i for i, w in enumerate(self.itos)}

    @classmethod
    def build(cls, texts: Iterable[str]) -> "Vocab":
        words = sorted({tok for t in texts for tok in tokenize(t)})
        return cls(w for w in words if w not in SPECIALS)

    pad_id = property(lambda self: 0)
    unk_id = property(lambda self: 1)
    bos_id = property(lambda self: 2)
    eos_id = property(lambda self: 3)

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, 1) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]


def tokenize_question(text: str, vocab: Vocab, max_len: int | None = None) -> QuestionTokens:
    toks = tokenize(text)
    if not toks:
        raise ValueError("cannot tokenize an empty question")
    if max_len is not None and len(toks) > max_len:
        raise ValueError(f"question has {len(toks)} tokens, limit is {max_len}")
    ids = np.asarray(vocab.encode(toks), dtype=np.int64)
    return QuestionTokens(ids=ids, length=len(ids))
