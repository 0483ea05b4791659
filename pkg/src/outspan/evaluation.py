"""Scoring predicted spans and types against a gold corpus.

Span metrics are exact-match: a predicted span counts only when both
boundaries equal a gold span's. Token-level tag metrics are a
diagnostic on top of that. Type metrics treat each span as one
multi-label instance; a gold span carries all of its sentence's outcome
types. In end-to-end scoring, predicted spans are paired with gold
spans by exact boundaries; an unmatched predicted span counts a false
positive for each type it predicts, and an unmatched gold span a false
negative for each of its types.

Ranking metrics order the five types by predicted probability (ties
resolved by the fixed type order) and average per-instance scores over
instances that have both probabilities and nonempty gold types;
instances with probabilities but no gold types are skipped and counted.

Predictions travel as JSON Lines, one record per sentence::

    {"doc_id": ..., "sentence_index": ..., "tags": [...],
     "spans": [{"start": ..., "end": ..., "type_probs": {...},
                "predicted_types": [...]}]}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Corpus, TAGS
from .errors import EvaluationError
from .model import OUTCOME_TYPES, SentencePrediction, SpanPrediction, decode_spans

DEFAULT_RANKING_NS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


def prf(tp: int, n_predicted: int, n_gold: int) -> PRF:
    p = tp / n_predicted if n_predicted else (1.0 if n_gold == 0 else 0.0)
    r = tp / n_gold if n_gold else (1.0 if n_predicted == 0 else 0.0)
    f = 0.0 if p + r == 0.0 else 2.0 * p * r / (p + r)
    return PRF(p, r, f)


@dataclass(frozen=True)
class SpanMetrics:
    scores: PRF
    n_gold: int
    n_predicted: int
    n_matched: int


@dataclass(frozen=True)
class TokenMetrics:
    accuracy: float
    per_tag: dict[str, PRF]
    macro_f1: float


@dataclass(frozen=True)
class TypeMetrics:
    per_type: dict[str, PRF]
    macro_f1: float
    micro: PRF
    n_instances: int


@dataclass(frozen=True)
class RankingMetrics:
    precision_at: dict[int, float]
    ndcg_at: dict[int, float]
    n_instances: int
    n_skipped: int


@dataclass(frozen=True)
class EvaluationReport:
    span: SpanMetrics
    token: TokenMetrics
    typing: TypeMetrics
    ranking: RankingMetrics


@dataclass(frozen=True)
class _Instance:
    """One span scored for typing: predicted types, probabilities, gold types."""

    predicted: tuple[str, ...]
    probs: dict[str, float] | None
    gold: tuple[str, ...]


def _pair_spans(prediction: SentencePrediction,
                gold_tags: Sequence[str],
                gold_types: tuple[str, ...]) -> tuple[int, int, int, list[_Instance]]:
    gold_spans = decode_spans(gold_tags)
    predicted_spans = [(s.start, s.end) for s in prediction.spans]
    gold_set = set(gold_spans)
    matched = [s for s in prediction.spans if (s.start, s.end) in gold_set]
    instances = []
    for span in prediction.spans:
        hit = (span.start, span.end) in gold_set
        instances.append(_Instance(span.predicted_types, span.type_probs,
                                   gold_types if hit else ()))
    predicted_set = set(predicted_spans)
    for span in gold_spans:
        if span not in predicted_set:
            instances.append(_Instance((), None, gold_types))
    return len(gold_spans), len(predicted_spans), len(matched), instances


def _ranking(instances: list[_Instance], ns: Sequence[int]) -> RankingMetrics:
    p_sums = {n: 0.0 for n in ns}
    ndcg_sums = {n: 0.0 for n in ns}
    count = 0
    skipped = 0
    for inst in instances:
        if inst.probs is None:
            continue
        if not inst.gold:
            skipped += 1
            continue
        probs = np.array([inst.probs[t] for t in OUTCOME_TYPES])
        order = np.argsort(-probs, kind="stable")  # ties keep the fixed type order
        relevant = [OUTCOME_TYPES[i] in inst.gold for i in order]
        for n in ns:
            top = relevant[:n]
            p_sums[n] += sum(top) / n
            dcg = sum(rel / math.log2(i + 2) for i, rel in enumerate(top))
            ideal = sum(1.0 / math.log2(i + 2)
                        for i in range(min(len(inst.gold), n)))
            ndcg_sums[n] += dcg / ideal
        count += 1
    if count:
        precision_at = {n: p_sums[n] / count for n in ns}
        ndcg_at = {n: ndcg_sums[n] / count for n in ns}
    else:
        precision_at = {n: 0.0 for n in ns}
        ndcg_at = {n: 0.0 for n in ns}
    return RankingMetrics(precision_at, ndcg_at, count, skipped)


def evaluate(corpus: Corpus, predictions: Sequence[SentencePrediction],
             ranking_ns: Sequence[int] = DEFAULT_RANKING_NS) -> EvaluationReport:
    """Score predictions against the corpus they were made for.

    Predictions must cover exactly the corpus's sentences; missing,
    duplicate, extra, or length-mismatched records are errors.
    """
    index: dict[tuple[str, int], SentencePrediction] = {}
    for p in predictions:
        key = (p.doc_id, p.sentence_index)
        if key in index:
            raise EvaluationError(f"duplicate prediction for {key[0]!r} "
                                  f"sentence {key[1]}")
        index[key] = p
    expected = {(doc.doc_id, i)
                for doc in corpus.documents for i in range(len(doc.sentences))}
    missing = sorted(expected - set(index))
    extra = sorted(set(index) - expected)
    if missing or extra:
        raise EvaluationError(f"predictions do not cover the corpus: "
                              f"missing {missing[:3]}, extra {extra[:3]}")

    tag_tp = {t: 0 for t in TAGS}
    tag_pred = {t: 0 for t in TAGS}
    tag_gold = {t: 0 for t in TAGS}
    tokens_correct = 0
    tokens_total = 0
    span_gold = span_pred = span_matched = 0
    instances: list[_Instance] = []

    for doc in corpus.documents:
        for i, sentence in enumerate(doc.sentences):
            prediction = index[(doc.doc_id, i)]
            if len(prediction.tags) != len(sentence.tokens):
                raise EvaluationError(
                    f"{doc.doc_id!r} sentence {i}: {len(prediction.tags)} predicted "
                    f"tags for {len(sentence.tokens)} tokens")
            for gold_tag, pred_tag in zip(sentence.tags, prediction.tags):
                tokens_total += 1
                tag_gold[gold_tag] += 1
                tag_pred[pred_tag] += 1
                if gold_tag == pred_tag:
                    tokens_correct += 1
                    tag_tp[gold_tag] += 1
            n_gold, n_pred, n_match, sentence_instances = _pair_spans(
                prediction, sentence.tags, sentence.outcome_types)
            span_gold += n_gold
            span_pred += n_pred
            span_matched += n_match
            instances.extend(sentence_instances)

    per_tag = {t: prf(tag_tp[t], tag_pred[t], tag_gold[t]) for t in TAGS}
    present_tags = [t for t in TAGS if tag_gold[t] > 0]
    token = TokenMetrics(
        accuracy=tokens_correct / tokens_total if tokens_total else 0.0,
        per_tag=per_tag,
        macro_f1=(sum(per_tag[t].f1 for t in present_tags) / len(present_tags)
                  if present_tags else 0.0))

    span = SpanMetrics(prf(span_matched, span_pred, span_gold),
                       span_gold, span_pred, span_matched)

    type_tp = {t: 0 for t in OUTCOME_TYPES}
    type_pred = {t: 0 for t in OUTCOME_TYPES}
    type_gold = {t: 0 for t in OUTCOME_TYPES}
    for inst in instances:
        for t in OUTCOME_TYPES:
            in_pred = t in inst.predicted
            in_gold = t in inst.gold
            if in_pred:
                type_pred[t] += 1
            if in_gold:
                type_gold[t] += 1
            if in_pred and in_gold:
                type_tp[t] += 1
    per_type = {t: prf(type_tp[t], type_pred[t], type_gold[t])
                for t in OUTCOME_TYPES}
    present_types = [t for t in OUTCOME_TYPES if type_gold[t] > 0]
    micro = prf(sum(type_tp.values()), sum(type_pred.values()),
                sum(type_gold.values()))
    typing = TypeMetrics(
        per_type=per_type,
        macro_f1=(sum(per_type[t].f1 for t in present_types) / len(present_types)
                  if present_types else 0.0),
        micro=micro,
        n_instances=len(instances))

    return EvaluationReport(span, token, typing,
                            _ranking(instances, tuple(ranking_ns)))


def report_to_dict(report: EvaluationReport) -> dict:
    """Plain nested dict form of a report, for JSON output."""
    def prf_dict(scores: PRF) -> dict:
        return {"precision": scores.precision, "recall": scores.recall,
                "f1": scores.f1}

    return {
        "span": {**prf_dict(report.span.scores),
                 "n_gold": report.span.n_gold,
                 "n_predicted": report.span.n_predicted,
                 "n_matched": report.span.n_matched},
        "token": {"accuracy": report.token.accuracy,
                  "macro_f1": report.token.macro_f1,
                  "per_tag": {t: prf_dict(s)
                              for t, s in report.token.per_tag.items()}},
        "typing": {"macro_f1": report.typing.macro_f1,
                   "micro": prf_dict(report.typing.micro),
                   "per_type": {t: prf_dict(s)
                                for t, s in report.typing.per_type.items()},
                   "n_instances": report.typing.n_instances},
        "ranking": {"precision_at": {str(n): v for n, v
                                     in report.ranking.precision_at.items()},
                    "ndcg_at": {str(n): v for n, v
                                in report.ranking.ndcg_at.items()},
                    "n_instances": report.ranking.n_instances,
                    "n_skipped": report.ranking.n_skipped},
    }


# ---------------------------------------------------------------------------
# predictions files


def serialize_predictions(predictions: Sequence[SentencePrediction]) -> str:
    lines = []
    for p in predictions:
        spans = [{"start": s.start, "end": s.end,
                  "type_probs": {t: s.type_probs[t] for t in OUTCOME_TYPES},
                  "predicted_types": list(s.predicted_types)}
                 for s in p.spans]
        lines.append(json.dumps({"doc_id": p.doc_id,
                                 "sentence_index": p.sentence_index,
                                 "tags": list(p.tags),
                                 "spans": spans}, sort_keys=True,
                                separators=(",", ":")))
    return "\n".join(lines) + "\n"


def parse_predictions(text: str) -> list[SentencePrediction]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    out: list[SentencePrediction] = []
    for lineno, line in enumerate(lines, start=1):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            raise EvaluationError("malformed JSON", lineno) from None
        try:
            doc_id = rec["doc_id"]
            sentence_index = rec["sentence_index"]
            tags = tuple(rec["tags"])
            raw_spans = rec["spans"]
        except (TypeError, KeyError):
            raise EvaluationError(
                "record needs doc_id, sentence_index, tags, spans", lineno) from None
        for tag in tags:
            if tag not in TAGS:
                raise EvaluationError(f"unknown tag {tag!r}", lineno)
        spans = []
        for raw in raw_spans:
            try:
                start, end = int(raw["start"]), int(raw["end"])
                probs = raw["type_probs"]
                predicted = tuple(raw["predicted_types"])
            except (TypeError, KeyError, ValueError):
                raise EvaluationError(
                    "span needs start, end, type_probs, predicted_types",
                    lineno) from None
            if not 0 <= start < end <= len(tags):
                raise EvaluationError(f"span [{start}, {end}) out of range", lineno)
            if set(probs) != set(OUTCOME_TYPES):
                raise EvaluationError("type_probs must cover every outcome type",
                                      lineno)
            for t in predicted:
                if t not in OUTCOME_TYPES:
                    raise EvaluationError(f"unknown outcome type {t!r}", lineno)
            spans.append(SpanPrediction(start, end,
                                        {t: float(probs[t]) for t in OUTCOME_TYPES},
                                        predicted))
        out.append(SentencePrediction(doc_id, sentence_index, tags, tuple(spans)))
    if not out:
        raise EvaluationError("predictions file is empty", 1)
    return out


def read_predictions(path) -> list[SentencePrediction]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_predictions(fh.read())


def write_predictions(path, predictions: Sequence[SentencePrediction]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(serialize_predictions(predictions))
