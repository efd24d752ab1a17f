"""Command-line entry point.

Progress and results are emitted as JSON lines on stdout; graph artifacts
(DOT or JSON) go to stdout only when no output file is given. Exit codes:
0 success, 1 usage, 2 bad input data, 3 internal failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import Config, load_config_file
from .cpg import graph_from_source, to_dot, to_json
from .errors import AnalysisError, DataError, GraphSumError, LexError, ParseError
from .pipeline import (
    evaluate_model,
    load_checkpoint,
    prepare_corpus,
    save_checkpoint,
    summarize_one,
    train,
)
from .retrieval import BACKENDS, CorpusEntry, load_corpus, save_corpus

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _ArgumentParser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this project reserves 2 for data."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def log_event(**fields) -> None:
    print(json.dumps(fields, sort_keys=True), flush=True)


def _read_source(args) -> str:
    if getattr(args, "code", None):
        return args.code
    if args.path == "-" or args.path is None:
        return sys.stdin.read()
    with open(args.path, encoding="utf-8") as fh:
        return fh.read()


def _config_from_args(args) -> Config:
    cfg = Config()
    if args.config:
        cfg = load_config_file(args.config, cfg)
    overrides = {}
    for flag, key in [
        ("hidden_dim", "hidden_dim"), ("word_dim", "word_dim"),
        ("type_dim", "type_dim"), ("edge_dim", "edge_dim"), ("hops", "hops"),
        ("vocab_cap", "vocab_cap"), ("dropout", "dropout"),
        ("batch_size", "batch_size"), ("epochs", "epochs"), ("lr", "lr"),
        ("patience", "patience"), ("sched_floor", "sched_floor"),
        ("max_summary_len", "max_summary_len"), ("beam", "beam_width"),
        ("seed", "seed"), ("retrieval", "retrieval"), ("static_agg", "static_agg"),
    ]:
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "no_augment", False):
        overrides["use_augment"] = False
    if getattr(args, "no_static", False):
        overrides["use_static"] = False
    if getattr(args, "no_dynamic", False):
        overrides["use_dynamic"] = False
    if overrides:
        cfg = Config(**{**cfg.to_dict(), **overrides})
    return cfg.validate()


def cmd_build_graph(args) -> int:
    source = _read_source(args)
    graph = graph_from_source(source)
    rendered = to_dot(graph) if args.format == "dot" else to_json(graph)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(rendered)
        log_event(event="graph_written", path=args.out, nodes=graph.node_count,
                  format=args.format)
    else:
        print(rendered)
    return EXIT_OK


def cmd_index(args) -> int:
    entries = load_corpus(args.corpus)
    samples, skipped = prepare_corpus(entries)
    kept_ids = {s.id for s in samples}
    kept = [e for e in entries if e.id in kept_ids]
    save_corpus(args.out, kept)
    log_event(event="indexed", path=args.out, kept=len(kept), skipped=len(skipped),
              skipped_ids=skipped, backend=args.backend)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    entries = load_corpus(args.corpus)
    samples, skipped = prepare_corpus(entries)
    if skipped:
        log_event(event="skipped_samples", split="train", ids=skipped)
    val_samples = None
    if args.val:
        val_entries = load_corpus(args.val)
        val_samples, val_skipped = prepare_corpus(val_entries)
        if val_skipped:
            log_event(event="skipped_samples", split="val", ids=val_skipped)

    def emit(stat):
        fields = {"event": "epoch", "epoch": stat.epoch,
                  "loss": round(stat.loss, 6),
                  "teacher_rate": round(stat.teacher_rate, 4),
                  "seconds": round(stat.seconds, 3)}
        if stat.val_bleu is not None:
            fields["val_bleu"] = round(stat.val_bleu, 6)
        log_event(**fields)

    result = train(samples, val_samples, cfg, target_loss=args.target_loss,
                   patience=args.patience, emit=emit)
    save_checkpoint(args.out, result.model, result.retrieval, result.epoch)
    figures = []
    if not args.no_figures:
        from .report import render_loss_curve

        curve = os.path.join(os.path.dirname(os.path.abspath(args.out)),
                             "loss_curve.png")
        figures.append(render_loss_curve(result.stats, curve))
    log_event(event="trained", checkpoint=args.out, epochs=len(result.stats),
              best_epoch=result.epoch, loss=round(result.stats[-1].loss, 6),
              figures=figures)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model, retrieval, epoch = load_checkpoint(args.checkpoint)
    entries = load_corpus(args.corpus)
    samples, skipped = prepare_corpus(entries)
    if skipped:
        log_event(event="skipped_samples", split="eval", ids=skipped)
    report, rows = evaluate_model(model, retrieval, samples, beam_width=args.beam)
    report["skipped"] = len(skipped)
    report["checkpoint_epoch"] = epoch
    os.makedirs(args.out_dir, exist_ok=True)
    from .report import write_per_sample_csv, write_report_json

    report_path = os.path.join(args.out_dir, "report.json")
    csv_path = os.path.join(args.out_dir, "per_sample.csv")
    figures: list[str] = []
    if not args.no_figures and rows:
        from .report import render_eval_figures

        figures = render_eval_figures(rows, args.out_dir)
    report["figures"] = [os.path.basename(p) for p in figures]
    write_report_json(report_path, report)
    write_per_sample_csv(csv_path, rows)
    log_event(event="report", path=report_path, per_sample=csv_path, **report)
    return EXIT_OK


def cmd_summarize(args) -> int:
    model, retrieval, _ = load_checkpoint(args.checkpoint)
    source = _read_source(args)
    out = summarize_one(model, retrieval, source, beam_width=args.beam,
                        emit_attention=args.emit_attention,
                        show_retrieval=args.show_retrieval)
    log_event(event="summary", **out)
    return EXIT_OK


def cmd_import_dir(args) -> int:
    if not os.path.isdir(args.dir):
        raise DataError(f"{args.dir}: not a directory")
    entries = []
    missing = []
    next_id = 0
    for name in sorted(os.listdir(args.dir)):
        if not name.endswith(".c"):
            continue
        stem = name[:-2]
        summary_path = os.path.join(args.dir, stem + ".txt")
        if not os.path.isfile(summary_path):
            missing.append(name)
            continue
        with open(os.path.join(args.dir, name), encoding="utf-8") as fh:
            code = fh.read()
        with open(summary_path, encoding="utf-8") as fh:
            summary = fh.read().strip()
        entries.append(CorpusEntry(next_id, code, summary))
        next_id += 1
    if missing:
        log_event(event="missing_summaries", files=missing)
    if not entries:
        raise DataError(f"{args.dir}: no .c files with matching .txt summaries")
    save_corpus(args.out, entries)
    log_event(event="imported", path=args.out, functions=len(entries),
              skipped=len(missing))
    return EXIT_OK


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--word-dim", dest="word_dim", type=int)
    p.add_argument("--type-dim", dest="type_dim", type=int)
    p.add_argument("--edge-dim", dest="edge_dim", type=int)
    p.add_argument("--hops", type=int)
    p.add_argument("--vocab-cap", dest="vocab_cap", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--sched-floor", dest="sched_floor", type=float)
    p.add_argument("--max-summary-len", dest="max_summary_len", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--retrieval", choices=BACKENDS)
    p.add_argument("--static-agg", dest="static_agg", choices=("sum", "mean"))
    p.add_argument("--no-augment", action="store_true",
                   help="disable retrieval augmentation")
    p.add_argument("--no-static", action="store_true",
                   help="disable the static message pass")
    p.add_argument("--no-dynamic", action="store_true",
                   help="disable the dynamic message pass")


def build_parser() -> _ArgumentParser:
    parser = _ArgumentParser(prog="graphsum",
                             description="Summarize C functions via graph encoding")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_ArgumentParser)

    p = sub.add_parser("build-graph", help="emit the program graph of one function")
    p.add_argument("path", nargs="?", default="-", help="source file, - for stdin")
    p.add_argument("--format", choices=("dot", "json"), default="dot")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("index", help="validate a corpus for retrieval")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", choices=BACKENDS, default="cosine")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("train", help="train a model on a JSONL corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--val", help="validation corpus for early stopping")
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--target-loss", dest="target_loss", type=float,
                   help="stop once epoch mean loss reaches this")
    p.add_argument("--patience", type=int,
                   help="epochs without val improvement before stopping (0 disables)")
    p.add_argument("--no-figures", dest="no_figures", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint against a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--beam", type=int)
    p.add_argument("--no-figures", dest="no_figures", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("summarize", help="summarize one function")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("path", nargs="?", default="-", help="source file, - for stdin")
    p.add_argument("--code", help="inline source text instead of a file")
    p.add_argument("--beam", type=int)
    p.add_argument("--emit-attention", dest="emit_attention", action="store_true")
    p.add_argument("--show-retrieval", dest="show_retrieval", action="store_true")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("import-dir", help="build a corpus from .c/.txt file pairs")
    p.add_argument("dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_import_dir)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, LexError, ParseError, AnalysisError) as exc:
        log_event(event="error", kind=type(exc).__name__, message=str(exc))
        return EXIT_DATA
    except GraphSumError as exc:
        log_event(event="error", kind=type(exc).__name__, message=str(exc))
        return EXIT_INTERNAL
    except OSError as exc:
        log_event(event="error", kind="OSError", message=str(exc))
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
