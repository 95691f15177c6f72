"""QA generation, question perturbation and reproducible dataset manifests."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..text import tokenize
from ..video import SamplerSpec, frame_name, save_clip
from .annotations import FrameAnnotation, clip_facts, save_annotations
from .render import random_scene_spec, render_synthetic_clip
from .templates import TEMPLATES, Inapplicable, QATemplate

log = logging.getLogger(__name__)

MANIFEST_FIELDS = ("clip_id", "frame_paths", "question", "answer_short", "answer_long", "keywords",
                   "category", "domain", "template_id", "out_of_template", "split")
DEFAULT_SPLIT = (4450 / 5200, 750 / 5200)


@dataclass
class QAPair:
    clip_id: str
    question: str
    answer_short: str
    answer_long: str
    keywords: tuple[str, ...]
    category: str
    domain: str
    template_id: str
    out_of_template: bool = False
    split: str = "train"

    def validate(self) -> "QAPair":
        if not self.question.strip():
            raise ValueError("empty question")
        if not self.keywords:
            raise ValueError(f"{self.template_id}: no keywords")
        long_toks = tokenize(self.answer_long)
        for kw in self.keywords:
            parts = tokenize(kw)
            if not any(long_toks[i:i + len(parts)] == parts for i in range(len(long_toks))):
                raise ValueError(f"keyword {kw!r} missing from long answer {self.answer_long!r}")
        if self.out_of_template and self.split != "test":
            raise ValueError("out-of-template pairs belong to the test split only")
        return self

    def manifest_record(self, frame_paths: Sequence[str]) -> dict:
        rec = {
            "clip_id": self.clip_id,
            "frame_paths": list(frame_paths),
            "question": self.question,
            "answer_short": self.answer_short,
            "answer_long": self.answer_long,
            "keywords": list(self.keywords),
            "category": self.category,
            "domain": self.domain,
            "template_id": self.template_id,
            "out_of_template": self.out_of_template,
            "split": self.split,
        }
        return {k: rec[k] for k in MANIFEST_FIELDS}


# --- perturbation --------------------------------------------------------

# applied in order, whole words, case-insensitive
SYNONYMS: tuple[tuple[str, str], ...] = (
    ("which tool", "what instrument"),
    ("surgical tool", "surgical instrument"),
    ("tool", "instrument"),
    ("is visible", "can be seen"),
    ("clearly visible", "easy to see"),
    ("endoscope", "scope"),
    ("being used", "in use"),
    ("being performed", "taking place"),
    ("being withdrawn", "pulled back"),
    ("located", "positioned"),
    ("estimated size", "approximate size"),
    ("histopathology", "tissue diagnosis"),
    ("occluded", "obstructed"),
    ("drifting", "moving"),
    ("found", "situated"),
    ("moving", "travelling"),
    ("illumination mode", "lighting mode"),
    ("exiting", "leaving"),
    ("advancing", "moving forward"),
)
_FRAMES = ("Looking at the video, {q}", "Based on this footage, {q}", "Tell me: {q}")


def _apply_synonyms(q: str) -> str:
    out = q
    for src, dst in SYNONYMS:
        out = re.sub(rf"\b{re.escape(src)}\b", dst, out, flags=re.IGNORECASE)
    return out


def _reorder(q: str) -> str | None:
    """Move a trailing 'in/during this clip' clause to the front."""
    m = re.match(r"^(.*?)\s+(in|during) this clip\?$", q, flags=re.IGNORECASE)
    if not m:
        return None
    body = m.group(1)
    return f"{m.group(2).capitalize()} this clip, {body[0].lower()}{body[1:]}?"


def _cap(q: str) -> str:
    return q[:1].upper() + q[1:]


def perturb_question(question: str, rng: np.random.Generator) -> str:
    """Rule-based rephrasing that keeps the answer unchanged and never returns the input."""
    out = _apply_synonyms(question)
    if out.lower() != question.lower() and rng.random() < 0.5:
        out = _reorder(out) or out
    if out.lower() == question.lower():
        out = _reorder(question) or _FRAMES[rng.integers(len(_FRAMES))].format(q=question[:1].lower() + question[1:])
    out = _cap(out)
    if out == question:
        out = "Looking at the video, " + question[:1].lower() + question[1:]
    return out


# --- QA generation -------------------------------------------------------

def generate_qa(clip_id: str, annotations: Sequence[FrameAnnotation], rng: np.random.Generator,
                templates: Sequence[QATemplate] = TEMPLATES, split: str = "train",
                n_frames: int = 8) -> list[QAPair]:
    """One canonical pair per applicable template; test clips also get a rephrased variant."""
    facts = clip_facts(annotations, n_frames)
    pairs = []
    for tpl in templates:
        slots = tpl.fill_slots(rng)
        try:
            ans = tpl.rule(facts, slots)
        except Inapplicable as exc:
            log.debug("%s: skipping template %s (%s)", clip_id, tpl.template_id, exc)
            continue
        question = tpl.render(slots)
        base = dict(clip_id=clip_id, answer_short=ans.short, answer_long=ans.long, keywords=ans.keywords,
                    category=tpl.category, domain=tpl.domain, template_id=tpl.template_id, split=split)
        pairs.append(QAPair(question=question, **base).validate())
        if split == "test":
            if rng.random() < 0.5:
                alt = tpl.paraphrases[rng.integers(len(tpl.paraphrases))].format(**slots)
            else:
                alt = perturb_question(question, rng)
            pairs.append(QAPair(question=alt, out_of_template=True, **base).validate())
    return pairs


# --- datasets ------------------------------------------------------------

def split_counts(n_clips: int, ratios: tuple[float, float] = DEFAULT_SPLIT) -> tuple[int, int]:
    if n_clips < 2:
        raise ValueError("need at least 2 clips")
    if len(ratios) != 2 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"split ratios must be two non-negative numbers summing to 1, got {ratios}")
    n_train = int(round(ratios[0] * n_clips))
    n_train = min(n_train, n_clips)
    if n_clips - n_train < 1:
        raise ValueError("test split would be empty")
    return n_train, n_clips - n_train


@dataclass
class ClipRecord:
    clip_id: str
    split: str
    frames: np.ndarray
    annotations: list[FrameAnnotation]
    pairs: list[QAPair]


def clip_id_for(i: int) -> str:
    return f"clip_{i:05d}"


def build_dataset(n_clips: int, seed: int = 0, ratios: tuple[float, float] = DEFAULT_SPLIT,
                  sampler: SamplerSpec = SamplerSpec(), image_size: int = 32,
                  templates: Sequence[QATemplate] = TEMPLATES) -> list[ClipRecord]:
    """Render clips and generate QA pairs in memory, ordered by clip id."""
    n_train, _ = split_counts(n_clips, ratios)
    root = np.random.default_rng(seed)
    order = root.permutation(n_clips)
    split_of = {int(i): ("train" if r < n_train else "test") for r, i in enumerate(order)}
    clip_seeds = root.integers(0, 2**62, size=n_clips)
    records = []
    for i in range(n_clips):
        cid = clip_id_for(i)
        spec = random_scene_spec(int(clip_seeds[i]), sampler.n_frames, image_size)
        clip, anns = render_synthetic_clip(spec, sampler, source_id=cid)
        qa_rng = np.random.default_rng([seed, i, 3])
        pairs = generate_qa(cid, anns, qa_rng, templates, split_of[i], sampler.n_frames)
        records.append(ClipRecord(cid, split_of[i], clip.frames, anns, pairs))
    return records


def manifest_lines(records: Sequence[ClipRecord], split: str, n_frames: int = 8) -> list[str]:
    lines = []
    for rec in sorted(records, key=lambda r: r.clip_id):
        if rec.split != split:
            continue
        paths = [f"clips/{rec.clip_id}/{frame_name(k)}" for k in range(n_frames)]
        for p in rec.pairs:
            lines.append(json.dumps(p.manifest_record(paths), ensure_ascii=False))
    return lines


def write_dataset(records: Sequence[ClipRecord], out_dir: str | Path,
                  sampler: SamplerSpec = SamplerSpec()) -> dict[str, Path]:
    """Write frames, per-clip annotation files and train/test JSON-lines manifests."""
    from ..video import Clip

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for rec in records:
        d = out / "clips" / rec.clip_id
        clip = Clip(frames=rec.frames, source_id=rec.clip_id, start_frame_index=0)
        save_clip(clip, d, sampler)
        save_annotations(d / "annotations.json", rec.annotations)
    paths = {}
    for split in ("train", "test"):
        p = out / f"{split}.jsonl"
        lines = manifest_lines(records, split, sampler.n_frames)
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("".join(line + "\n" for line in lines))
        paths[split] = p
    return paths


def read_manifest(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            row = json.loads(line)
            missing = [k for k in MANIFEST_FIELDS if k not in row]
            if missing:
                raise ValueError(f"{path}:{lineno}: missing fields {missing}")
            rows.append(row)
    return rows
