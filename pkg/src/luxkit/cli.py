"""Command-line entry point wiring the pipeline stages together.

Subcommands: mine-vocab, train, embed, eval-halves, bench, train-classifier,
score, filter.  Exit codes: 0 success, 1 usage error, 2 data/format error.

Flags can be pre-loaded from a TOML config file (``--config``); explicit
command-line flags win over config values.  Every run logs its fully
resolved configuration to stderr as a reproducibility record.  All
randomness flows from ``--seed``; ``--workers`` caps internal parallelism
and falls back to the LUXKIT_WORKERS environment variable, then the logical
core count.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Sequence

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

import numpy as np

from . import classifier, corpus_io, evaluation, model as model_mod, trainer, vocab as vocab_mod
from .errors import DataError, LuxkitError

log = logging.getLogger("luxkit")


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _workers(value: int | None) -> int:
    if value is not None:
        return max(1, value)
    env = os.environ.get("LUXKIT_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in str(text).split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _read_labels(path) -> dict[str, float]:
    """NDJSON label file: one {"id": ..., "label": ...} object per line."""
    labels: dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed label record at line {lineno}: {exc.msg}") from None
            if "id" not in record or "label" not in record:
                raise DataError(f"line {lineno}: label records need 'id' and 'label'")
            labels[str(record["id"])] = float(record["label"])
    return labels


def build_parser() -> tuple[_Parser, dict[str, _Parser]]:
    parser = _Parser(prog="luxkit", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    by_name: dict[str, _Parser] = {}

    def sub(name: str, help_text: str) -> argparse.ArgumentParser:
        p = subs.add_parser(name, help=help_text)
        p.error = parser.error  # keep exit code 1 for subparser usage errors
        p.add_argument("--config", help="TOML file of default flag values")
        p.add_argument("--seed", type=int, default=0, help="seed for all randomness")
        p.add_argument("--workers", type=int, default=None,
                       help="parallelism cap (default: LUXKIT_WORKERS, then core count)")
        by_name[name] = p
        return p

    p = sub("mine-vocab", "mine an ngram vocabulary and write LUXV + initial LUXM")
    p.add_argument("--corpus", required=True)
    p.add_argument("--target-size", type=int, required=True, help="vocabulary size V")
    p.add_argument("--max-n", type=int, default=5)
    p.add_argument("--capacity", type=int, default=None, help="sketch slots (default 4*V)")
    p.add_argument("--dims", type=_int_list, default=[92, 3072, 3072, 192],
                   help="layer widths after V for the initial model")
    p.add_argument("--vocab-out", help="LUXV dump path")
    p.add_argument("--model-out", help="initial LUXM path")
    p.add_argument("--limit", type=int, default=None)

    p = sub("train", "distill a model against precomputed teacher embeddings")
    p.add_argument("--model", required=True, help="initial LUXM (from mine-vocab)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--teacher", required=True, help="LUXE teacher embeddings")
    p.add_argument("--out", required=True, help="trained LUXM path")
    p.add_argument("--metrics", help="NDJSON per-step metrics path")
    p.add_argument("--checkpoint-dir")
    p.add_argument("--batch-size", type=int, default=3072)
    p.add_argument("--temperature", type=float, default=3.0)
    p.add_argument("--peak-lr", type=float, default=0.01)
    p.add_argument("--warmup-frac", type=float, default=0.05)
    p.add_argument("--decay-frac", type=float, default=0.10)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--limit", type=int, default=None)

    p = sub("embed", "embed a corpus into a LUXE file")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int, default=None)

    p = sub("eval-halves", "document-half matching error@k")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--ks", type=_int_list, default=[1, 2, 5, 10, 100, 1000])
    p.add_argument("--out", help="JSON report path (default: stdout)")
    p.add_argument("--csv", help="also write a k,error CSV")
    p.add_argument("--limit", type=int, default=None)

    p = sub("bench", "throughput benchmark")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=evaluation.BENCH_MODES, default="embed")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--scorer", help="LUXC scorer for embed_and_score")
    p.add_argument("--out", help="JSON report path (default: stdout)")
    p.add_argument("--csv", help="also write a stage,seconds CSV")
    p.add_argument("--limit", type=int, default=None)

    p = sub("train-classifier", "fit the MLP scorer on frozen embeddings")
    p.add_argument("--embeddings", required=True, help="LUXE file")
    p.add_argument("--labels", required=True, help="NDJSON lines of {id, label in [0,1]}")
    p.add_argument("--out", required=True, help="LUXC path")
    p.add_argument("--hidden", type=_int_list, default=[256, 256])
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--epochs", type=int, default=10)

    p = sub("score", "embed a corpus and write classifier scores as LUXS")
    p.add_argument("--model", required=True)
    p.add_argument("--scorer", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int, default=None)

    p = sub("filter", "select the top fraction of ids from a LUXS file")
    p.add_argument("--scores", required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--out", help="id list path, one per line (default: stdout)")

    return parser, by_name


def _config_path_from(argv: Sequence[str]) -> str | None:
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if token.startswith("--config="):
            return token.split("=", 1)[1]
    return None


def _apply_config(parser: _Parser, by_name: dict[str, _Parser], argv: Sequence[str]):
    """Merge --config file values as subcommand defaults; explicit flags win.

    Config keys satisfy required flags, so the config path is extracted
    before parsing and matching actions are un-required for this run.
    """
    if not argv or argv[0] not in by_name:
        args = parser.parse_args(argv)  # triggers the usage error path
        if args.command is None:
            parser.error("a subcommand is required")
        return args
    config_path = _config_path_from(argv)
    if config_path:
        with open(config_path, "rb") as fh:
            values = tomllib.load(fh)
        sub = by_name[argv[0]]
        actions = {action.dest: action for action in sub._actions}
        for key in values:
            if key not in actions:
                parser.error(f"unknown config key {key!r} for {argv[0]}")
            actions[key].required = False
        sub.set_defaults(**values)
    return parser.parse_args(argv)


def cli_dispatch(argv: Sequence[str] | None = None) -> int:
    """Parse argv, run the subcommand, map errors to exit codes."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, by_name = build_parser()
    try:
        args = _apply_config(parser, by_name, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    resolved = {k: v for k, v in vars(args).items() if k != "config"}
    resolved["workers"] = _workers(args.workers)
    log.info("resolved config: %s", json.dumps(resolved, default=str, sort_keys=True))
    try:
        _COMMANDS[args.command](args, resolved["workers"])
    except LuxkitError as exc:
        print(f"luxkit {args.command}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"luxkit {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(message)s")
    sys.exit(cli_dispatch())


def _emit_json(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _cmd_mine_vocab(args, workers: int) -> None:
    if not args.vocab_out and not args.model_out:
        raise DataError("nothing to do: give --vocab-out and/or --model-out")
    docs = corpus_io.read_corpus(args.corpus, limit=args.limit)
    vocab = vocab_mod.mine_vocab(
        docs, target_size=args.target_size, max_n=args.max_n, capacity=args.capacity
    )
    if args.vocab_out:
        vocab_mod.save_vocab_dump(args.vocab_out, vocab)
        log.info("wrote %s (V=%d)", args.vocab_out, vocab.size)
    if args.model_out:
        idf = vocab_mod.compute_idf(vocab)
        skeleton = model_mod.init_model(vocab, idf, dims=args.dims, seed=args.seed)
        model_mod.save_model(args.model_out, skeleton)
        log.info("wrote %s (dims %s)", args.model_out, "x".join(map(str, skeleton.dims)))


def _cmd_train(args, workers: int) -> None:
    net = model_mod.load_model(args.model)
    docs = list(corpus_io.read_corpus(args.corpus, limit=args.limit))
    teacher = corpus_io.read_embeddings(args.teacher)
    cfg = trainer.TrainConfig(
        batch_size=args.batch_size,
        temperature=args.temperature,
        peak_lr=args.peak_lr,
        warmup_frac=args.warmup_frac,
        decay_frac=args.decay_frac,
        epochs=args.epochs,
        seed=args.seed,
    )
    trained, metrics = trainer.train(
        net, docs, teacher, cfg, metrics_path=args.metrics, checkpoint_dir=args.checkpoint_dir
    )
    model_mod.save_model(args.out, trained)
    losses = [m["loss"] for m in metrics if m["loss"] is not None]
    log.info(
        "wrote %s after %d steps (first loss %.6f, last %.6f)",
        args.out, len(metrics), losses[0] if losses else float("nan"),
        losses[-1] if losses else float("nan"),
    )


def _cmd_embed(args, workers: int) -> None:
    net = model_mod.load_model(args.model)
    docs = list(corpus_io.read_corpus(args.corpus, limit=args.limit))
    matrix = model_mod.embed_batch(net, docs, workers=workers)
    corpus_io.write_embeddings(args.out, matrix)
    log.info("wrote %s (%d x %d)", args.out, matrix.n, matrix.dim)


def _cmd_eval_halves(args, workers: int) -> None:
    net = model_mod.load_model(args.model)
    docs = list(corpus_io.read_corpus(args.corpus, limit=args.limit))
    pairs, unsplittable = evaluation.split_corpus(docs)
    if not pairs:
        raise DataError("no document could be split into halves")
    halves = [half for pair in pairs for half in (pair.half_a, pair.half_b)]
    matrix = model_mod.embed_batch(net, halves, workers=workers)
    curve = evaluation.error_at_k(matrix, evaluation.pair_map(pairs), args.ks)
    report = curve.to_dict()
    report["unsplittable_docs"] = unsplittable
    _emit_json(report, args.out)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("k,error\n")
            for k, err in zip(curve.ks, curve.errors):
                fh.write(f"{k},{err}\n")


def _cmd_bench(args, workers: int) -> None:
    net = model_mod.load_model(args.model)
    docs = list(corpus_io.read_corpus(args.corpus, limit=args.limit))
    scorer = classifier.load_scorer(args.scorer) if args.scorer else None
    report = evaluation.throughput_bench(
        net, docs, mode=args.mode, scorer=scorer, repeats=args.repeats, workers=workers
    )
    _emit_json(report, args.out)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("stage,seconds\n")
            for stage, seconds in report["stages"].items():
                fh.write(f"{stage},{seconds}\n")
            fh.write(f"wall,{report['wall_seconds']}\n")


def _cmd_train_classifier(args, workers: int) -> None:
    matrix = corpus_io.read_embeddings(args.embeddings)
    labels = _read_labels(args.labels)
    missing = [doc_id for doc_id in labels if doc_id not in set(matrix.ids)]
    if missing:
        raise DataError(f"label id {missing[0]!r} has no embedding row")
    row_of = {doc_id: i for i, doc_id in enumerate(matrix.ids)}
    examples = [
        classifier.LabeledExample(doc_id, matrix.values[row_of[doc_id]], label)
        for doc_id, label in labels.items()
    ]
    cfg = classifier.ScorerConfig(
        hidden=tuple(args.hidden), lr=args.lr, batch_size=args.batch_size,
        epochs=args.epochs, seed=args.seed,
    )
    mlp, metrics = classifier.train_scorer(examples, cfg)
    classifier.save_scorer(args.out, mlp)
    log.info("wrote %s after %d steps", args.out, len(metrics))


def _cmd_score(args, workers: int) -> None:
    net = model_mod.load_model(args.model)
    mlp = classifier.load_scorer(args.scorer)
    docs = list(corpus_io.read_corpus(args.corpus, limit=args.limit))
    matrix = model_mod.embed_batch(net, docs, workers=workers)
    scores = classifier.scorer_forward(mlp, matrix.values)
    corpus_io.write_scores(args.out, matrix.ids, np.asarray(scores, dtype=np.float32))
    log.info("wrote %s (%d scores)", args.out, matrix.n)


def _cmd_filter(args, workers: int) -> None:
    selected = classifier.filter_top_fraction(args.scores, args.fraction)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.writelines(doc_id + "\n" for doc_id in selected)
    else:
        for doc_id in selected:
            print(doc_id)


_COMMANDS = {
    "mine-vocab": _cmd_mine_vocab,
    "train": _cmd_train,
    "embed": _cmd_embed,
    "eval-halves": _cmd_eval_halves,
    "bench": _cmd_bench,
    "train-classifier": _cmd_train_classifier,
    "score": _cmd_score,
    "filter": _cmd_filter,
}


if __name__ == "__main__":
    main()
