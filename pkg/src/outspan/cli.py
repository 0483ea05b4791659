"""Command-line surface for training, scoring, and corpus tooling.

Subcommands: train, evaluate, predict, align, merge, gradcheck, stats.
Every file-writing command takes an output directory and places a
``manifest.json`` next to its outputs recording the resolved
configuration, the verbatim ``--set`` overrides, and a sha256 digest of
every input file. Nothing records a timestamp, so rerunning a command
with identical inputs reproduces every output byte for byte.

Failures exit nonzero with a one-line JSON error record on stderr; each
error class has its own exit code.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import tensor as T
from .alignment import (align_corpora, entries_to_dict, map_types,
                        mapping_as_dict, matrix_to_tsv, merge_corpora)
from .corpus import (ContextualStore, Corpus, CorpusStats, Document,
                     EmbeddingTable, TaggedSentence, compute_stats,
                     read_contextual, read_corpus, read_embeddings,
                     write_corpus)
from .encoder import contextualize, encode_document
from .errors import (AlignmentError, CheckpointError, ConfigError,
                     CorpusFormatError, DivergenceError, EmbeddingError,
                     EvaluationError, GradientError, OutspanError)
from .evaluation import (evaluate, read_predictions, report_to_dict,
                         write_predictions)
from .model import (ModelParams, forward_sentence, init_model,
                    load_checkpoint, predict_document, save_checkpoint)
from .training import (TrainConfig, build_config, parse_config_text,
                       parse_override, train)

GRADCHECK_TOLERANCE = 1e-4

_EXIT_BY_ERROR: tuple[tuple[type, int], ...] = (
    (FileNotFoundError, 3),
    (IsADirectoryError, 3),
    (ConfigError, 4),
    (CorpusFormatError, 5),
    (EmbeddingError, 6),
    (CheckpointError, 7),
    (EvaluationError, 8),
    (AlignmentError, 9),
    (DivergenceError, 10),
    (GradientError, 11),
    (OutspanError, 12),
)


# ---------------------------------------------------------------------------
# shared plumbing


def _resolve_config(args) -> tuple[TrainConfig, list[str]]:
    values: dict = {}
    if getattr(args, "config", None):
        text = Path(args.config).read_text(encoding="utf-8")
        values = parse_config_text(text)
    overrides = list(getattr(args, "set", None) or [])
    for item in overrides:
        key, value = parse_override(item)
        values[key] = value
    return build_config(values), overrides


def _load_vectors(mode: str, config: TrainConfig):
    """The embedding source a model in the given encoder mode consumes."""
    if mode == "bilstm":
        if config.embeddings_path is None:
            raise ConfigError("bilstm mode needs embeddings_path")
        return read_embeddings(config.embeddings_path)
    if config.contextual_path is None:
        raise ConfigError("precomputed mode needs contextual_path")
    return read_contextual(config.contextual_path)


def _check_vectors_match(params: ModelParams, vectors, corpus: Corpus) -> None:
    if params.encoder.mode == "bilstm":
        if vectors.dim != params.encoder.input_dim:
            raise CheckpointError(
                f"checkpoint expects {params.encoder.input_dim}-dimensional "
                f"embeddings, file has {vectors.dim}")
    else:
        if vectors.dim != params.encoder.hidden_dim:
            raise CheckpointError(
                f"checkpoint expects {params.encoder.hidden_dim}-dimensional "
                f"contextual vectors, file has {vectors.dim}")
        vectors.verify_coverage(corpus)


def _vector_paths(mode: str, config: TrainConfig) -> list[str]:
    if mode == "bilstm":
        return [config.embeddings_path]
    return [config.contextual_path]


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _write_manifest(out_dir: Path, command: str, inputs, outputs,
                    config: TrainConfig | None = None,
                    overrides=(), extra: dict | None = None) -> None:
    manifest: dict = {
        "command": command,
        "inputs": {str(p): _digest(p) for p in inputs},
        "outputs": sorted(outputs),
        "overrides": list(overrides),
    }
    if config is not None:
        manifest["config"] = asdict(config)
    if extra:
        manifest.update(extra)
    _write_json(out_dir / "manifest.json", manifest)


def _stats_tsv(columns: list[tuple[str, CorpusStats]]) -> str:
    lines = ["metric\t" + "\t".join(name for name, _ in columns)]

    def row(metric, values):
        lines.append(metric + "\t" + "\t".join(str(v) for v in values))

    row("abstracts", [s.n_abstracts for _, s in columns])
    row("sentences", [s.n_sentences for _, s in columns])
    row("tokens", [s.n_tokens for _, s in columns])
    row("spans", [s.n_spans for _, s in columns])
    row("labels", [s.n_types for _, s in columns])
    row("avg_sentence_length", [repr(s.avg_sentence_length) for _, s in columns])
    all_types: set[str] = set()
    for _, s in columns:
        all_types.update(s.type_counts)
    for t in sorted(all_types):
        row(f"type:{t}", [s.type_counts.get(t, 0) for _, s in columns])
    return "\n".join(lines) + "\n"


def _predict_corpus(corpus: Corpus, vectors, params: ModelParams,
                    config: TrainConfig, gold_spans: bool):
    predictions = []
    for doc in corpus.documents:
        predictions.extend(predict_document(
            doc, vectors, params,
            threshold=config.oc_threshold,
            attention_enabled=not config.disable_attention,
            context_enabled=not config.disable_abstract_context,
            gold_spans=gold_spans))
    return predictions


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    config, overrides = _resolve_config(args)
    corpus = read_corpus(args.corpus)
    vectors = _load_vectors(config.encoder_mode, config)
    out = _out_dir(args)
    inputs = [args.corpus] + _vector_paths(config.encoder_mode, config)
    if args.config:
        inputs.append(args.config)
    try:
        result = train(corpus, config, vectors)
    except DivergenceError as err:
        if err.last_good is not None:
            save_checkpoint(out / "checkpoint.diverged.json", err.last_good)
        raise
    save_checkpoint(out / "checkpoint.json", result.params)
    log_lines = ["epoch\tmean_loss\tn_sentences"]
    log_lines += [f"{e.epoch}\t{e.mean_loss!r}\t{e.n_sentences}"
                  for e in result.log]
    (out / "loss_log.tsv").write_text("\n".join(log_lines) + "\n",
                                      encoding="utf-8")
    _write_manifest(out, "train", inputs, ["checkpoint.json", "loss_log.tsv"],
                    config=config, overrides=overrides)
    last = result.log[-1].mean_loss if result.log else float("nan")
    print(f"trained {config.epochs} epochs on {corpus.sentence_count()} "
          f"sentences, final mean loss {last:.6f}")
    return 0


def cmd_predict(args) -> int:
    config, overrides = _resolve_config(args)
    params = load_checkpoint(args.checkpoint)
    corpus = read_corpus(args.corpus)
    vectors = _load_vectors(params.encoder.mode, config)
    _check_vectors_match(params, vectors, corpus)
    out = _out_dir(args)
    predictions = _predict_corpus(corpus, vectors, params, config,
                                  args.gold_spans)
    write_predictions(out / "predictions.jsonl", predictions)
    inputs = [args.corpus, args.checkpoint]
    inputs += _vector_paths(params.encoder.mode, config)
    if args.config:
        inputs.append(args.config)
    _write_manifest(out, "predict", inputs, ["predictions.jsonl"],
                    config=config, overrides=overrides,
                    extra={"gold_spans": args.gold_spans})
    print(f"wrote predictions for {len(predictions)} sentences")
    return 0


def cmd_evaluate(args) -> int:
    config, overrides = _resolve_config(args)
    corpus = read_corpus(args.corpus)
    out = _out_dir(args)
    outputs = ["evaluation.json", "ranking_curve.tsv"]
    inputs = [args.corpus]
    if args.config:
        inputs.append(args.config)
    if args.predictions:
        predictions = read_predictions(args.predictions)
        inputs.append(args.predictions)
    else:
        params = load_checkpoint(args.checkpoint)
        vectors = _load_vectors(params.encoder.mode, config)
        _check_vectors_match(params, vectors, corpus)
        predictions = _predict_corpus(corpus, vectors, params, config,
                                      args.gold_spans)
        write_predictions(out / "predictions.jsonl", predictions)
        outputs.append("predictions.jsonl")
        inputs += [args.checkpoint] + _vector_paths(params.encoder.mode, config)
    report = evaluate(corpus, predictions)
    _write_json(out / "evaluation.json", report_to_dict(report))
    curve = ["n\tprecision_at\tndcg_at"]
    curve += [f"{n}\t{report.ranking.precision_at[n]!r}\t"
              f"{report.ranking.ndcg_at[n]!r}"
              for n in sorted(report.ranking.precision_at)]
    (out / "ranking_curve.tsv").write_text("\n".join(curve) + "\n",
                                           encoding="utf-8")
    _write_manifest(out, "evaluate", inputs, outputs, config=config,
                    overrides=overrides,
                    extra={"gold_spans": args.gold_spans})
    print(f"span F1 {report.span.scores.f1:.4f}  "
          f"token accuracy {report.token.accuracy:.4f}  "
          f"type micro-F1 {report.typing.micro.f1:.4f}")
    return 0


def cmd_align(args) -> int:
    source = read_corpus(args.source)
    target = read_corpus(args.target)
    if args.embeddings:
        vectors = read_embeddings(args.embeddings)
        vector_source = "static"
        vector_path = args.embeddings
    else:
        vectors = read_contextual(args.contextual)
        vector_source = "contextual"
        vector_path = args.contextual
        shared = ({d.doc_id for d in source.documents}
                  & {d.doc_id for d in target.documents})
        if shared:
            raise AlignmentError(
                f"contextual alignment needs distinct document ids across "
                f"corpora, shared: {sorted(shared)}")
        vectors.verify_coverage(source)
        vectors.verify_coverage(target)
    domain_parents = None
    if args.domains:
        domain_parents = json.loads(Path(args.domains).read_text(encoding="utf-8"))
        if (not isinstance(domain_parents, dict)
                or not all(isinstance(k, str) and isinstance(v, str)
                           for k, v in domain_parents.items())):
            raise AlignmentError("domains file must map domain names to "
                                 "outcome types")
    entries, matrix = align_corpora(source, target, vectors, domain_parents)
    out = _out_dir(args)
    (out / "distances.tsv").write_text(matrix_to_tsv(matrix), encoding="utf-8")
    _write_json(out / "mapping.json", entries_to_dict(entries, vector_source))
    inputs = [args.source, args.target, vector_path]
    if args.domains:
        inputs.append(args.domains)
    _write_manifest(out, "align", inputs, ["distances.tsv", "mapping.json"],
                    extra={"vector_source": vector_source})
    for e in entries:
        flags = "" if not e.tied else " [tie]"
        print(f"{e.source_label} -> {e.outcome_type} "
              f"(via {e.via_domain}, distance {e.distance:.4f}, "
              f"{e.method}){flags}")
    return 0


def _read_mapping(path) -> dict[str, str]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(obj, dict) and isinstance(obj.get("mapping"), dict):
        obj = obj["mapping"]
    if (not isinstance(obj, dict)
            or not all(isinstance(k, str) and isinstance(v, str)
                       for k, v in obj.items())):
        raise AlignmentError("mapping file must hold a label-to-type object")
    return obj


def cmd_merge(args) -> int:
    source = read_corpus(args.source)
    target = read_corpus(args.target)
    mapping = _read_mapping(args.mapping)
    merged = merge_corpora(source, target, mapping,
                           source_prefix=args.source_prefix,
                           target_prefix=args.target_prefix)
    out = _out_dir(args)
    write_corpus(out / "merged.txt", merged)
    stats = _stats_tsv([
        ("source", compute_stats(map_types(source, mapping))),
        ("target", compute_stats(target)),
        ("merged", compute_stats(merged)),
    ])
    (out / "stats.tsv").write_text(stats, encoding="utf-8")
    _write_manifest(out, "merge",
                    [args.source, args.target, args.mapping],
                    ["merged.txt", "stats.tsv"],
                    extra={"source_prefix": args.source_prefix,
                           "target_prefix": args.target_prefix})
    print(f"merged {len(source)} + {len(target)} abstracts -> {len(merged)}")
    return 0


def cmd_stats(args) -> int:
    corpus = read_corpus(args.corpus)
    text = _stats_tsv([("value", compute_stats(corpus))])
    sys.stdout.write(text)
    if args.out_dir:
        out = _out_dir(args)
        (out / "stats.tsv").write_text(text, encoding="utf-8")
        _write_manifest(out, "stats", [args.corpus], ["stats.tsv"])
    return 0


# ---------------------------------------------------------------------------
# gradient checking


def _gradcheck_case(mode: str, hidden_dim: int, width: int, n_tokens: int,
                    seed: int) -> float:
    """Max relative gradient error of a full random model on one document."""
    rng = np.random.default_rng(seed)
    doc = Document("g0", (
        TaggedSentence(tuple(f"t{i}" for i in range(n_tokens)),
                       tuple("BI"[i % 2] if i < 2 else "O"
                             for i in range(n_tokens)),
                       ("Physiological", "Mortality")),
        TaggedSentence(tuple(f"u{i}" for i in range(n_tokens)),
                       tuple("B" if i == n_tokens - 1 else "O"
                             for i in range(n_tokens)),
                       ("Life-Impact",)),
    ))
    if mode == "bilstm":
        input_dim = 6
        tokens = [t for s in doc.sentences for t in s.tokens]
        vectors = EmbeddingTable(
            {t: rng.normal(size=input_dim) for t in tokens}, dim=input_dim)
    else:
        input_dim = None
        vectors = ContextualStore(hidden_dim, {
            ("g0", 0): rng.normal(size=(n_tokens, hidden_dim)),
            ("g0", 1): rng.normal(size=(n_tokens, hidden_dim)),
        })
    params = init_model(mode, hidden_dim, input_dim, width, rng)
    named = params.named()
    names = [n for n, _ in named]

    def f(tensors):
        trial = params.with_tensors(dict(zip(names, tensors)))
        states, ctx = encode_document(doc, vectors, trial.encoder)
        total = None
        for i, sentence in enumerate(doc.sentences):
            hidden = contextualize(states[i], ctx)
            fw = forward_sentence(hidden, ctx, trial,
                                  gold_tags=sentence.tags,
                                  gold_types=sentence.outcome_types)
            loss = fw.loss()
            total = loss if total is None else T.add(total, loss)
        return total

    return T.finite_difference_check(f, [t for _, t in named], h=1e-4)


def cmd_gradcheck(args) -> int:
    modes = ["bilstm", "precomputed"] if args.mode == "both" else [args.mode]
    errors = {}
    for mode in modes:
        errors[mode] = _gradcheck_case(mode, args.hidden_dim, args.attention_b,
                                       args.tokens, args.seed)
        print(f"{mode}: max relative error {errors[mode]:.3e}")
    worst = max(errors.values())
    print(f"max relative error {worst:.3e} (tolerance {args.tolerance:g})")
    if args.out_dir:
        out = _out_dir(args)
        _write_json(out / "gradcheck.json",
                    {"errors": errors, "max": worst,
                     "tolerance": args.tolerance})
        _write_manifest(out, "gradcheck", [], ["gradcheck.json"],
                        extra={"mode": args.mode, "seed": args.seed,
                               "hidden_dim": args.hidden_dim,
                               "attention_b": args.attention_b,
                               "tokens": args.tokens})
    if worst > args.tolerance:
        raise GradientError(f"gradient check failed: max relative error "
                            f"{worst:.3e} exceeds {args.tolerance:g}")
    return 0


# ---------------------------------------------------------------------------
# argument grammar


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="outspan",
        description="Joint outcome span detection and classification.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", help="configuration file")
        p.add_argument("--set", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override one configuration key")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--corpus", required=True)
    add_config_args(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="tag and type a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    add_config_args(p)
    p.add_argument("--gold-spans", action="store_true",
                   help="type the gold spans instead of predicted ones")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against a corpus")
    p.add_argument("--corpus", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--predictions", help="predictions file to score")
    group.add_argument("--checkpoint", help="model to run and score")
    add_config_args(p)
    p.add_argument("--gold-spans", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("align", help="map one corpus's labels onto outcome types")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--embeddings", help="static embedding file")
    group.add_argument("--contextual", help="contextual embedding file")
    p.add_argument("--domains", help="JSON file mapping domains to types")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("merge", help="relabel a corpus and merge it with another")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--mapping", required=True)
    p.add_argument("--source-prefix", default="")
    p.add_argument("--target-prefix", default="")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("gradcheck", help="check gradients on a tiny model")
    p.add_argument("--mode", choices=["bilstm", "precomputed", "both"],
                   default="both")
    p.add_argument("--hidden-dim", type=int, default=8)
    p.add_argument("--attention-b", type=int, default=4)
    p.add_argument("--tokens", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=GRADCHECK_TOLERANCE)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("stats", help="print corpus statistics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as err:
        for cls, code in _EXIT_BY_ERROR:
            if isinstance(err, cls):
                record = {"error": type(err).__name__, "exit_code": code,
                          "message": str(err)}
                print(json.dumps(record, sort_keys=True), file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
