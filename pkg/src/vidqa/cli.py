"""Command-line entry point.

Every command accepts ``--config FILE``, ``--preset NAME`` and any number of
``--key value`` overrides naming :class:`vidqa.config.RunConfig` fields.
Precedence is command line > config file > preset > defaults.

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("vidqa")


class NumericFailure(RuntimeError):
    pass


def _overrides(extra: list[str]) -> dict:
    from .config import ConfigError, parse_value

    out = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise ConfigError(f"unexpected argument {tok!r}; overrides take the form --key value")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, raw = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"override {tok} has no value")
            raw = extra[i + 1]
            i += 2
        out[key] = parse_value(raw)
    return out


def _config(args, extra):
    from .config import resolve

    overrides = _overrides(extra)
    if getattr(args, "lambda_", None) is not None:
        overrides["lam"] = args.lambda_
    return resolve(args.config, args.preset, overrides)


# --- commands -------------------------------------------------------------

def cmd_gen_data(args, extra) -> int:
    from .config import write_resolved
    from .data.generate import build_dataset, split_counts, write_dataset

    cfg = _config(args, extra)
    ratios = (cfg.train_fraction, 1.0 - cfg.train_fraction)
    n_train, n_test = split_counts(cfg.n_clips, ratios)
    records = build_dataset(cfg.n_clips, cfg.seed, ratios, cfg.sampler(), cfg.image_size)
    paths = write_dataset(records, cfg.data_dir, cfg.sampler())
    write_resolved(cfg, cfg.data_dir)
    n_pairs = {s: sum(1 for _ in open(p, encoding="utf-8")) for s, p in paths.items()}
    print(f"clips: {n_train} train / {n_test} test")
    print(f"pairs: {n_pairs['train']} train / {n_pairs['test']} test -> {cfg.data_dir}")
    return EXIT_OK


def cmd_train(args, extra) -> int:
    from .config import write_resolved
    from .pipeline import build_model, build_vocab, checkpoint_from_model, fit, load_examples
    from .training import save_checkpoint

    cfg = _config(args, extra)
    examples = load_examples(Path(cfg.data_dir) / "train.jsonl", cfg, limit=cfg.max_train_items)
    if not examples:
        raise ValueError("training manifest is empty")
    vocab = build_vocab([e.row for e in examples])
    model = build_model(cfg, vocab)
    out = Path(cfg.out_dir)
    write_resolved(cfg, out)
    t0 = time.perf_counter()

    def progress(epoch, result):
        if epoch % max(1, cfg.epochs // 10) == 0 or epoch == cfg.epochs - 1:
            print(f"epoch {epoch:4d}  loss {result.epoch_losses[-1]:.6f}  ({time.perf_counter() - t0:.1f}s)")

    result = fit(model, examples, cfg, callback=progress)
    ckpt_path = save_checkpoint(out / "checkpoint.svqa", checkpoint_from_model(model, cfg, result.steps))
    with open(out / "loss_trace.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch\tbatch\tloss\n")
        for e, trace in enumerate(result.batch_losses):
            fh.writelines(f"{e}\t{b}\t{v!r}\n" for b, v in enumerate(trace))
    print(f"trained {len(examples)} pairs for {len(result.epoch_losses)} epochs; checkpoint -> {ckpt_path}")
    return EXIT_OK


def _load_model(path):
    from .pipeline import model_from_checkpoint
    from .training import load_checkpoint

    return model_from_checkpoint(load_checkpoint(path))


def cmd_eval(args, extra) -> int:
    from .config import resolve, write_resolved
    from .metrics import report_schema
    from .pipeline import evaluate, load_examples, write_jsonl

    model, ckpt_cfg = _load_model(args.checkpoint)
    # the checkpoint fixes the model; overrides only steer paths and decoding
    cfg = resolve(args.config, args.preset, {**_config_base(ckpt_cfg), **_overrides(extra)})
    manifest = Path(args.manifest) if args.manifest else Path(cfg.data_dir) / "test.jsonl"
    oot = True if args.out_of_template else (False if args.in_template else None)
    examples = load_examples(manifest, cfg, limit=args.limit, out_of_template=oot)
    if not examples:
        raise ValueError(f"no items to evaluate in {manifest}")
    report, records = evaluate(model, examples, cfg)
    doc = report.to_json()
    _validate(doc, report_schema())
    out = Path(cfg.out_dir)
    write_resolved(cfg, out)
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    (out / "report.txt").write_text(report.table(), encoding="utf-8")
    write_jsonl(out / "predictions.jsonl", records)
    print(report.table(), end="")
    return EXIT_OK


def _config_base(ckpt_cfg) -> dict:
    keep = ("data_dir", "out_dir", "answer_type", "max_new_tokens", "n_frames", "stride", "fps", "image_size")
    d = ckpt_cfg.to_dict()
    return {k: d[k] for k in keep}


def _validate(doc: dict, schema: dict) -> None:
    try:
        import jsonschema
    except ImportError:  # optional; the report is still written
        return
    jsonschema.validate(doc, schema)


def cmd_predict(args, extra) -> int:
    from .video import load_clip

    model, cfg = _load_model(args.checkpoint)
    max_new = int(_overrides(extra).get("max_new_tokens", cfg.max_new_tokens))
    clip = load_clip(args.clip_dir)
    trace = model.generate(clip.frames, args.question, max_new)
    words = model.vocab.decode(trace.token_ids)
    answer = " ".join(words)
    print(f"answer: {answer}" if answer else "answer: (empty; end-of-sequence predicted first)")
    for step, (tok, score) in enumerate(trace.steps):
        print(f"  step {step:2d}  token {model.vocab.itos[tok]!r:>14}  id {tok:4d}  score {score:+.4f}")
    return EXIT_OK


def cmd_ablate_lambda(args, extra) -> int:
    from .config import write_resolved
    from .pipeline import ablate_lambda, ablation_json, ablation_table, build_vocab, load_examples

    cfg = _config(args, extra)
    grid = [float(x) for x in args.grid.split(",")] if args.grid else None
    train_ex = load_examples(Path(cfg.data_dir) / "train.jsonl", cfg, limit=cfg.max_train_items)
    test_ex = load_examples(Path(cfg.data_dir) / "test.jsonl", cfg, limit=args.max_test_items)
    vocab = build_vocab([e.row for e in train_ex])
    kwargs = {"grid": grid} if grid else {}
    rows = ablate_lambda(cfg, train_ex, test_ex, vocab, **kwargs)
    out = Path(cfg.out_dir)
    write_resolved(cfg, out)
    (out / "ablation.json").write_text(json.dumps(ablation_json(rows), indent=2) + "\n", encoding="utf-8")
    table = ablation_table(rows)
    (out / "ablation.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


def cmd_gradcheck(args, extra) -> int:
    from .tensor.gradcheck import broken_case, loss_cases, primitive_cases, run_suite

    if extra:
        _overrides(extra)  # reject stray arguments consistently
    cases = primitive_cases() + loss_cases()
    if args.inject_bug:
        cases.append(broken_case())
    t0 = time.perf_counter()
    rows = run_suite(cases, range(args.seeds), tol=args.tol)
    width = max(len(n) for n, _, _ in rows) + 2
    print("case".ljust(width) + "max rel err".rjust(14) + "  result")
    for name, err, ok in rows:
        print(name.ljust(width) + f"{err:14.3e}" + ("  pass" if ok else "  FAIL"))
    failed = [n for n, _, ok in rows if not ok]
    print(f"{len(rows) - len(failed)}/{len(rows)} passed over {args.seeds} seeds in {time.perf_counter() - t0:.1f}s")
    if failed:
        raise NumericFailure(f"gradient check failed: {', '.join(failed)}")
    return EXIT_OK


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vidqa", description="Desk-scale video question answering pipeline.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat 'key = value' config file")
        sp.add_argument("--preset", help="named preset: desk, paper or overfit")
        return sp

    common(sub.add_parser("gen-data", help="render synthetic clips and write QA manifests"))
    t = common(sub.add_parser("train", help="train a model on data_dir/train.jsonl"))
    t.add_argument("--lambda", dest="lambda_", type=float, help="keyword weight (alias for --lam)")

    e = common(sub.add_parser("eval", help="score a checkpoint on a manifest"))
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--manifest", help="defaults to data_dir/test.jsonl")
    e.add_argument("--limit", type=int, default=0, help="score only the first N items (0 = all)")
    g = e.add_mutually_exclusive_group()
    g.add_argument("--out-of-template", action="store_true", help="only rephrased questions")
    g.add_argument("--in-template", action="store_true", help="only template questions")

    pr = sub.add_parser("predict", help="answer one question about one clip")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--clip-dir", required=True)
    pr.add_argument("--question", required=True)

    a = common(sub.add_parser("ablate-lambda", help="train one model per keyword weight"))
    a.add_argument("--grid", help="comma-separated lambdas (default 1,2,5,10,25,50)")
    a.add_argument("--max-test-items", type=int, default=0, help="cap on evaluated test pairs (0 = all)")

    gc = sub.add_parser("gradcheck", help="finite-difference check of every differentiable primitive")
    gc.add_argument("--seeds", type=int, default=20)
    gc.add_argument("--tol", type=float, default=1e-3)
    gc.add_argument("--inject-bug", action="store_true", help="add a primitive with a wrong gradient")
    return p


COMMANDS = {
    "gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "predict": cmd_predict,
    "ablate-lambda": cmd_ablate_lambda, "gradcheck": cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    from .config import ConfigError
    from .tensor.optim import NonFiniteGradientError
    from .training import CheckpointFormatError, NonFiniteLossError

    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteLossError, NonFiniteGradientError, NumericFailure) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, CheckpointFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
