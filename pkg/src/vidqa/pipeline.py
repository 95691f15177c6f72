"""Glue between manifests, models, checkpoints and reports."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import RunConfig
from .data.generate import read_manifest
from .metrics import METRICS, EvalItem, EvalReport, evaluate_corpus
from .model import Sample, VQAModel
from .text import Vocab
from .training import (
    LAMBDA_GRID,
    Checkpoint,
    TrainResult,
    encode_checkpoint,
    train,
)
from .video import load_frames

log = logging.getLogger(__name__)


@dataclass
class Example:
    sample: Sample
    row: dict


def load_examples(manifest: str | Path, cfg: RunConfig, limit: int = 0,
                  out_of_template: bool | None = None) -> list[Example]:
    """Read a manifest and its frames; frame paths resolve against the manifest directory."""
    manifest = Path(manifest)
    rows = read_manifest(manifest)
    if out_of_template is not None:
        rows = [r for r in rows if bool(r["out_of_template"]) == out_of_template]
    if limit:
        rows = rows[:limit]
    cache: dict[str, np.ndarray] = {}
    out = []
    for r in rows:
        if r["clip_id"] not in cache:
            cache[r["clip_id"]] = load_frames([manifest.parent / p for p in r["frame_paths"]])
        answer = r["answer_long"] if cfg.answer_type == "long" else r["answer_short"]
        s = Sample(frames=cache[r["clip_id"]], question=r["question"], answer=answer,
                   keywords=tuple(r["keywords"]), category=r["category"], domain=r["domain"],
                   out_of_template=bool(r["out_of_template"]))
        out.append(Example(s, r))
    return out


def build_vocab(rows: Sequence[dict]) -> Vocab:
    """Word vocabulary over training questions and both answer forms."""
    texts = []
    for r in rows:
        texts += [r["question"], r["answer_short"], r["answer_long"]]
    return Vocab.build(texts)


def build_model(cfg: RunConfig, vocab: Vocab) -> VQAModel:
    model = VQAModel(cfg.encoder_config(len(vocab)), cfg.decoder_config(len(vocab)), vocab, seed=cfg.seed)
    model.apply_freeze_policy(cfg.freeze_policy)
    return model


def checkpoint_from_model(model: VQAModel, cfg: RunConfig, step: int = 0) -> Checkpoint:
    snapshot = cfg.to_dict()
    snapshot["vocab"] = list(model.vocab.itos)
    return Checkpoint(tensors=dict(model.state_dict()), config=snapshot, step=step, seed=cfg.seed)


def model_from_checkpoint(ckpt: Checkpoint) -> tuple[VQAModel, RunConfig]:
    snapshot = dict(ckpt.config)
    words = snapshot.pop("vocab", None)
    if words is None:
        raise ValueError("checkpoint has no vocabulary in its config snapshot")
    cfg = RunConfig(**snapshot)
    vocab = Vocab(words[4:])
    if vocab.itos != words:
        raise ValueError("checkpoint vocabulary does not start with the special tokens")
    model = build_model(cfg, vocab)
    model.load_state_dict(ckpt.tensors, strict=True)
    return model, cfg


def checkpoint_digest(ckpt: Checkpoint) -> str:
    return hashlib.sha256(encode_checkpoint(ckpt)).hexdigest()


def fit(model: VQAModel, examples: Sequence[Example], cfg: RunConfig, callback: Callable | None = None) -> TrainResult:
    return train([e.sample for e in examples], model, cfg.train_config(), callback=callback)


# --- evaluation ------------------------------------------------------------

def predict_all(model: VQAModel, examples: Sequence[Example], max_new_tokens: int) -> list[str]:
    return [model.answer(e.sample.frames, e.sample.question, max_new_tokens) for e in examples]


def evaluate(model: VQAModel, examples: Sequence[Example], cfg: RunConfig) -> tuple[EvalReport, list[dict]]:
    preds = predict_all(model, examples, cfg.max_new_tokens)
    items = [EvalItem(references=(e.sample.answer,), candidate=p, keywords=e.sample.keywords,
                      category=e.sample.category, domain=e.sample.domain,
                      out_of_template=e.sample.out_of_template) for e, p in zip(examples, preds)]
    report = evaluate_corpus(items)
    records = []
    for e, p, scores in zip(examples, preds, report.items):
        rec = {"clip_id": e.row["clip_id"], "question": e.sample.question, "reference": e.sample.answer,
               "prediction": p, "out_of_template": e.sample.out_of_template}
        rec.update({m: scores[m] for m in METRICS})
        records.append(rec)
    return report, records


def write_jsonl(path: Path, records: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(json.dumps(r) + "\n" for r in records))


# --- lambda ablation ---------------------------------------------------------

ABLATION_METRICS = ("bleu4", "rouge_l", "meteor", "k_acc")


@dataclass
class AblationRow:
    lam: float
    init_digest: str
    final_loss: float
    in_template: dict | None
    out_of_template: dict | None


def ablate_lambda(cfg: RunConfig, train_examples: Sequence[Example], test_examples: Sequence[Example],
                  vocab: Vocab, grid: Sequence[float] = LAMBDA_GRID) -> list[AblationRow]:
    """Train one model per lambda from the same initial weights; score each on the test items."""
    init = checkpoint_from_model(build_model(cfg, vocab), cfg)
    rows = []
    for lam in grid:
        run_cfg = RunConfig(**{**cfg.to_dict(), "lam": float(lam)})
        model, _ = model_from_checkpoint(init)
        digest = checkpoint_digest(checkpoint_from_model(model, cfg))
        result = fit(model, train_examples, run_cfg)
        report, _ = evaluate(model, test_examples, run_cfg)
        rows.append(AblationRow(float(lam), digest, result.epoch_losses[-1],
                                report.in_template, report.out_of_template))
        log.info("lambda %g done: final loss %.6f", lam, result.epoch_losses[-1])
    return rows


def ablation_json(rows: Sequence[AblationRow]) -> dict:
    def pick(agg):
        return None if agg is None else {m: agg[m] for m in ABLATION_METRICS}

    return {"metrics": list(ABLATION_METRICS),
            "rows": [{"lambda": r.lam, "init_sha256": r.init_digest, "final_loss": r.final_loss,
                      "in_template": pick(r.in_template), "out_of_template": pick(r.out_of_template)}
                     for r in rows]}


def ablation_table(rows: Sequence[AblationRow]) -> str:
    labels = {"bleu4": "BLE-4", "rouge_l": "ROU-L", "meteor": "MET", "k_acc": "K-ACC"}
    head = "lambda".ljust(8) + "".join(f"in:{labels[m]}".rjust(10) for m in ABLATION_METRICS)
    head += "".join(f"out:{labels[m]}".rjust(11) for m in ABLATION_METRICS)
    lines = [head]
    for r in rows:
        cells = []
        for agg, w in ((r.in_template, 10), (r.out_of_template, 11)):
            for m in ABLATION_METRICS:
                v = None if agg is None else agg[m]
                cells.append(("-" if v is None else f"{v:.2f}").rjust(w))
        lines.append(f"{r.lam:g}".ljust(8) + "".join(cells))
    return "\n".join(lines) + "\n"


__all__ = [
    "AblationRow", "Example", "ablate_lambda", "ablation_json", "ablation_table", "build_model", "build_vocab",
    "checkpoint_digest", "checkpoint_from_model", "evaluate", "fit", "load_examples",
    "model_from_checkpoint", "predict_all", "write_jsonl",
]
