"""Answer-generation metrics: BLEU, ROUGE-2/L, METEOR and keyword accuracy.

All scores are in [0, 1]; corpus reports scale them to percent.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

from .text import tokenize

log = logging.getLogger(__name__)

Tokens = Sequence[str]

# Longest suffixes first; a suffix is stripped only if >= 3 characters remain.
SUFFIXES = ("ational", "ation", "ness", "ment", "ing", "ies", "ly", "le", "ed", "es", "er", "s")
MIN_STEM = 3
SUFFIX_TABLE_VERSION = 1


def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: Tokens, reference: Tokens, max_n: int = 4) -> float:
    """Sentence BLEU with brevity penalty.

    Orders with no clipped match are smoothed to ``1 / (2 c)`` (c = candidate
    length). A candidate sharing no unigram with the reference scores 0.
    """
    c, r = len(candidate), len(reference)
    if c == 0 or r == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand = _ngrams(candidate, n)
        ref = _ngrams(reference, n)
        hits = sum(min(k, ref[g]) for g, k in cand.items())
        if hits == 0:
            if n == 1:
                return 0.0
            p = 1.0 / (2 * c)
        else:
            p = hits / sum(cand.values())
        log_sum += math.log(p)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum / max_n)


def _lcs(a: Tokens, b: Tokens) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def rouge_l(candidate: Tokens, reference: Tokens) -> float:
    """LCS-based F1."""
    if not candidate or not reference:
        return 0.0
    lcs = _lcs(candidate, reference)
    return _f1(lcs / len(candidate), lcs / len(reference))


def rouge_2(candidate: Tokens, reference: Tokens) -> float:
    """Clipped bigram-overlap F1; one-word answers score 1 only when identical."""
    cand, ref = _ngrams(candidate, 2), _ngrams(reference, 2)
    if not cand or not ref:
        return 1.0 if (not cand and not ref and candidate and list(candidate) == list(reference)) else 0.0
    hits = sum(min(k, ref[g]) for g, k in cand.items())
    return _f1(hits / sum(cand.values()), hits / sum(ref.values()))


def stem(word: str) -> str:
    for suf in SUFFIXES:
        if word.endswith(suf) and len(word) - len(suf) >= MIN_STEM:
            return word[: -len(suf)]
    return word


def _align(candidate: Tokens, reference: Tokens) -> list[tuple[int, int]]:
    """Greedy left-to-right unigram alignment: exact stage, then stem stage."""
    pairs: list[tuple[int, int]] = []
    used_c: set[int] = set()
    used_r: set[int] = set()
    for key in (lambda w: w, stem):
        ref_keys = [key(w) for w in reference]
        for i, w in enumerate(candidate):
            if i in used_c:
                continue
            kw = key(w)
            for j, rk in enumerate(ref_keys):
                if j not in used_r and rk == kw:
                    pairs.append((i, j))
                    used_c.add(i)
                    used_r.add(j)
                    break
    return sorted(pairs)


def meteor(candidate: Tokens, reference: Tokens) -> float:
    """``Fmean * (1 - 0.5 (chunks/m)^3)`` with ``Fmean = 10PR / (R + 9P)``."""
    if not candidate or not reference:
        return 0.0
    align = _align(candidate, reference)
    m = len(align)
    if m == 0:
        return 0.0
    chunks = 1
    for (i0, j0), (i1, j1) in zip(align, align[1:]):
        if not (i1 == i0 + 1 and j1 == j0 + 1):
            chunks += 1
    p, r = m / len(candidate), m / len(reference)
    fmean = 10 * p * r / (r + 9 * p)
    return fmean * (1.0 - 0.5 * (chunks / m) ** 3)


def contains_phrase(tokens: Tokens, phrase: Tokens) -> bool:
    n = len(phrase)
    return n > 0 and any(list(tokens[i: i + n]) == list(phrase) for i in range(len(tokens) - n + 1))


def keyword_accuracy(candidate: str | Tokens, keywords: Iterable[str]) -> int | None:
    """1 iff every keyword occurs as a whole-word token run; None when there are no keywords."""
    kws = [tokenize(k) for k in keywords]
    kws = [k for k in kws if k]
    if not kws:
        return None
    toks = tokenize(candidate) if isinstance(candidate, str) else [t.lower() for t in candidate]
    return int(all(contains_phrase(toks, k) for k in kws))


# --- corpus evaluation ----------------------------------------------------

METRICS = ("bleu4", "rouge_l", "meteor", "k_acc", "bleu3", "rouge_2")
COLUMN_LABELS = {"bleu4": "BLE-4", "rouge_l": "ROU-L", "meteor": "MET", "k_acc": "K-ACC",
                 "bleu3": "BLE-3", "rouge_2": "ROU-2"}


@dataclass
class EvalItem:
    references: tuple[str, ...]
    candidate: str
    keywords: tuple[str, ...] = ()
    category: str = ""
    domain: str = ""
    out_of_template: bool = False

    def __post_init__(self):
        if isinstance(self.references, str):
            self.references = (self.references,)
        if not self.references or not any(tokenize(r) for r in self.references):
            raise ValueError("an evaluation item needs a non-empty reference")


def score_item(item: EvalItem) -> dict[str, float | None]:
    """Per-item scores; text metrics take the best reference."""
    cand = tokenize(item.candidate)
    refs = [tokenize(r) for r in item.references]
    best = lambda fn: max(fn(cand, r) for r in refs)  # noqa: E731
    return {
        "bleu4": best(lambda c, r: bleu(c, r, 4)),
        "rouge_l": best(rouge_l),
        "meteor": best(meteor),
        "k_acc": keyword_accuracy(cand, item.keywords),
        "bleu3": best(lambda c, r: bleu(c, r, 3)),
        "rouge_2": best(rouge_2),
    }


def _aggregate(rows: Sequence[dict]) -> dict:
    out: dict = {"n": len(rows)}
    for m in METRICS:
        vals = [r[m] for r in rows if r[m] is not None]
        out[m] = round(100.0 * sum(vals) / len(vals), 2) if vals else None
    return out


@dataclass
class EvalReport:
    overall: dict
    in_template: dict | None
    out_of_template: dict | None
    by_category: dict[str, dict]
    by_domain: dict[str, dict]
    items: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "metrics": list(METRICS),
            "overall": self.overall,
            "in_template": self.in_template,
            "out_of_template": self.out_of_template,
            "by_category": self.by_category,
            "by_domain": self.by_domain,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=False) + "\n"

    def table(self) -> str:
        rows = [("Overall", self.overall), ("In-template", self.in_template),
                ("Out-of-template", self.out_of_template)]
        rows += [(f"  {k}", v) for k, v in self.by_domain.items()]
        return format_table(rows)


def format_table(rows: Sequence[tuple[str, dict | None]], first: str = "Split") -> str:
    cols = [COLUMN_LABELS[m] for m in METRICS]
    width = max([len(first)] + [len(name) for name, _ in rows]) + 2
    lines = [first.ljust(width) + "".join(c.rjust(8) for c in cols) + "       n"]
    for name, agg in rows:
        if agg is None:
            continue
        cells = "".join(("-" if agg[m] is None else f"{agg[m]:.2f}").rjust(8) for m in METRICS)
        lines.append(name.ljust(width) + cells + str(agg["n"]).rjust(8))
    return "\n".join(lines) + "\n"


def evaluate_corpus(items: Sequence[EvalItem]) -> EvalReport:
    if not items:
        raise ValueError("cannot evaluate an empty corpus")
    rows = [score_item(it) for it in items]
    for it, row in zip(items, rows):
        if row["k_acc"] is None:
            log.info("item without keywords excluded from K-ACC: %r", it.candidate)

    def group(key) -> dict[str, dict]:
        buckets: dict[str, list] = {}
        for it, row in zip(items, rows):
            buckets.setdefault(key(it), []).append(row)
        return {k: _aggregate(v) for k, v in sorted(buckets.items())}

    ins = [r for it, r in zip(items, rows) if not it.out_of_template]
    outs = [r for it, r in zip(items, rows) if it.out_of_template]
    report = EvalReport(
        overall=_aggregate(rows),
        in_template=_aggregate(ins) if ins else None,
        out_of_template=_aggregate(outs) if outs else None,
        by_category=group(lambda it: it.category),
        by_domain=group(lambda it: it.domain),
    )
    report.items = rows
    return report


def report_schema() -> dict:
    text = resources.files("vidqa").joinpath("report_schema.json").read_text(encoding="utf-8")
    return json.loads(text)
