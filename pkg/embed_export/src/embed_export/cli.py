"""Command line front end for exporting and verifying vector files."""

from __future__ import annotations

import argparse
import sys

from .corpus import read_corpus
from .errors import CorpusFormatError, ExportError
from .export import ExportConfig, export
from .verify import verify_export

_EXIT_BY_ERROR = (
    (FileNotFoundError, 3),
    (IsADirectoryError, 3),
    (ExportError, 4),
    (CorpusFormatError, 5),
)


def _layer_arg(text: str):
    if text == "last":
        return "last"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"layer must be an integer or 'last', got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Export word-level contextual vectors from a pretrained "
                    "transformer, one JSONL record per corpus sentence.")
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("export", help="write word vectors for every sentence")
    ex.add_argument("--corpus", required=True, help="tagged corpus file")
    ex.add_argument("--model", required=True,
                    help="model identifier or local model directory")
    ex.add_argument("--out", required=True, help="output JSONL path")
    ex.add_argument("--layer", type=_layer_arg, default="last",
                    help="hidden-state index, 0 is the embedding layer "
                         "(default: last)")
    ex.add_argument("--pooling", choices=("mean", "first"), default="mean",
                    help="how to pool a word's subword vectors")
    ex.add_argument("--batch-size", type=int, default=16)
    ex.add_argument("--revision", default=None,
                    help="model revision to pin for reproducible exports")

    ve = sub.add_parser("verify",
                        help="check an exported file against its corpus")
    ve.add_argument("--corpus", required=True)
    ve.add_argument("--file", required=True)
    return parser


def cmd_export(args) -> int:
    try:
        from transformers.utils import logging as hf_logging
        hf_logging.set_verbosity_error()
        hf_logging.disable_progress_bar()
    except ImportError:  # pragma: no cover
        pass
    summary = export(ExportConfig(
        corpus_path=args.corpus, model=args.model, output_path=args.out,
        layer=args.layer, pooling=args.pooling, batch_size=args.batch_size,
        revision=args.revision))
    print(f"wrote {summary.n_sentences} records of dimension {summary.dim} "
          f"to {args.out}")
    return 0


def cmd_verify(args) -> int:
    problems = verify_export(read_corpus(args.corpus), args.file)
    if problems:
        for problem in problems:
            print(problem, file=sys.stderr)
        return 1
    print("ok")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = cmd_export if args.command == "export" else cmd_verify
    try:
        return handler(args)
    except Exception as err:
        for kind, code in _EXIT_BY_ERROR:
            if isinstance(err, kind):
                print(f"error: {err}", file=sys.stderr)
                return code
        raise
