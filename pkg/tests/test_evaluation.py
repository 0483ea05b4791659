"""Metric checks against hand-computed values and frozen constants."""

import math

import numpy as np
import pytest

from outspan import evaluation as EV
from outspan.corpus import Corpus, Document, TaggedSentence, parse_corpus
from outspan.errors import EvaluationError
from outspan.model import OUTCOME_TYPES, SentencePrediction, SpanPrediction, \
    decode_spans


def span(start, end, probs, predicted):
    full = {t: probs.get(t, 0.05) for t in OUTCOME_TYPES}
    return SpanPrediction(start, end, full, tuple(predicted))


def perfect_predictions(corpus):
    out = []
    for doc in corpus.documents:
        for i, sentence in enumerate(doc.sentences):
            spans = []
            gold = tuple(t for t in OUTCOME_TYPES if t in sentence.outcome_types)
            for start, end in decode_spans(sentence.tags):
                probs = {t: (1.0 if t in gold else 0.0) for t in OUTCOME_TYPES}
                spans.append(SpanPrediction(start, end, probs, gold))
            out.append(SentencePrediction(doc.doc_id, i, sentence.tags,
                                          tuple(spans)))
    return out


def hand_corpus():
    return Corpus((Document("d", (
        TaggedSentence(("t0", "t1", "t2", "t3"), ("B", "I", "O", "B"),
                       ("Physiological", "Mortality")),
        TaggedSentence(("a", "b"), ("O", "O"), ()),
    )),))


def hand_predictions():
    return [
        SentencePrediction("d", 0, ("B", "I", "O", "O"), (
            span(0, 2, {"Physiological": 0.9, "Mortality": 0.8},
                 ("Physiological", "Mortality")),
            span(2, 3, {"Physiological": 0.7}, ("Physiological",)),
        )),
        SentencePrediction("d", 1, ("O", "O"), ()),
    ]


class TestPerfectPredictions:
    def test_all_exact_metrics_are_one(self):
        corpus = hand_corpus()
        report = EV.evaluate(corpus, perfect_predictions(corpus))
        assert report.span.scores == EV.PRF(1.0, 1.0, 1.0)
        assert report.token.accuracy == 1.0
        assert report.token.macro_f1 == 1.0
        assert report.typing.macro_f1 == 1.0
        assert report.typing.micro == EV.PRF(1.0, 1.0, 1.0)
        assert report.ranking.precision_at[1] == 1.0
        for n in EV.DEFAULT_RANKING_NS:
            assert report.ranking.ndcg_at[n] == 1.0
        assert report.ranking.n_skipped == 0


class TestHandComputedCase:
    def test_span_metrics(self):
        report = EV.evaluate(hand_corpus(), hand_predictions())
        assert report.span.n_gold == 2
        assert report.span.n_predicted == 2
        assert report.span.n_matched == 1
        assert report.span.scores.precision == pytest.approx(0.5)
        assert report.span.scores.recall == pytest.approx(0.5)
        assert report.span.scores.f1 == pytest.approx(0.5)

    def test_token_metrics(self):
        report = EV.evaluate(hand_corpus(), hand_predictions())
        assert report.token.accuracy == pytest.approx(5 / 6)
        assert report.token.per_tag["B"] == EV.PRF(1.0, 0.5, pytest.approx(2 / 3))
        assert report.token.per_tag["I"].f1 == 1.0
        assert report.token.per_tag["O"].f1 == pytest.approx(6 / 7)
        assert report.token.macro_f1 == pytest.approx((2 / 3 + 1.0 + 6 / 7) / 3)

    def test_typing_metrics(self):
        report = EV.evaluate(hand_corpus(), hand_predictions())
        phys = report.typing.per_type["Physiological"]
        mort = report.typing.per_type["Mortality"]
        assert phys == EV.PRF(0.5, 0.5, pytest.approx(0.5))
        assert mort.precision == 1.0 and mort.recall == 0.5
        assert mort.f1 == pytest.approx(2 / 3)
        assert report.typing.macro_f1 == pytest.approx((0.5 + 2 / 3) / 2)
        assert report.typing.micro.precision == pytest.approx(2 / 3)
        assert report.typing.micro.recall == pytest.approx(0.5)
        assert report.typing.micro.f1 == pytest.approx(4 / 7)
        assert report.typing.n_instances == 3

    def test_ranking_counts_and_values(self):
        report = EV.evaluate(hand_corpus(), hand_predictions())
        assert report.ranking.n_instances == 1  # matched span only
        assert report.ranking.n_skipped == 1  # unmatched predicted span
        assert report.ranking.precision_at[1] == 1.0
        assert report.ranking.precision_at[2] == 1.0
        assert report.ranking.precision_at[5] == pytest.approx(2 / 5)
        assert report.ranking.ndcg_at[2] == 1.0


class TestRankingConstants:
    def one_span_corpus(self):
        return Corpus((Document("d", (
            TaggedSentence(("x",), ("B",), ("Mortality",)),)),))

    def prediction(self, probs):
        return [SentencePrediction("d", 0, ("B",),
                                   (span(0, 1, probs, ()),))]

    def test_gold_at_rank_two(self):
        probs = {"Physiological": 0.9, "Mortality": 0.8}
        report = EV.evaluate(self.one_span_corpus(), self.prediction(probs))
        assert report.ranking.precision_at[1] == 0.0
        assert report.ranking.precision_at[2] == pytest.approx(0.5)
        assert report.ranking.ndcg_at[2] == 0.6309297535714575
        assert report.ranking.ndcg_at[1] == 0.0

    def test_ties_resolve_in_fixed_type_order(self):
        even = {t: 0.5 for t in OUTCOME_TYPES}
        corpus = Corpus((Document("d", (
            TaggedSentence(("x",), ("B",), ("Physiological",)),)),))
        report = EV.evaluate(corpus, self.prediction(even))
        assert report.ranking.precision_at[1] == 1.0  # first type wins ties

    def test_gold_at_last_rank(self):
        probs = {t: 0.5 for t in OUTCOME_TYPES}
        report = EV.evaluate(self.one_span_corpus(), self.prediction(probs))
        # Mortality sits at rank 2 under tie order
        assert report.ranking.ndcg_at[2] == 0.6309297535714575
        even_low = {"Adverse-effects": 0.9}
        corpus = Corpus((Document("d", (
            TaggedSentence(("x",), ("B",), ("Physiological",)),)),))
        probs = {"Mortality": 0.8, "Life-Impact": 0.7, "Resource-use": 0.6,
                 "Adverse-effects": 0.5, "Physiological": 0.01}
        report = EV.evaluate(corpus, self.prediction(probs))
        assert report.ranking.ndcg_at[5] == 0.38685280723454163


class TestCoverageErrors:
    def test_missing_prediction(self):
        with pytest.raises(EvaluationError, match="missing"):
            EV.evaluate(hand_corpus(), hand_predictions()[:1])

    def test_extra_prediction(self):
        extra = hand_predictions() + [SentencePrediction("other", 0, ("O",), ())]
        with pytest.raises(EvaluationError, match="extra"):
            EV.evaluate(hand_corpus(), extra)

    def test_duplicate_prediction(self):
        preds = hand_predictions() + hand_predictions()[:1]
        with pytest.raises(EvaluationError, match="duplicate"):
            EV.evaluate(hand_corpus(), preds)

    def test_tag_length_mismatch(self):
        preds = hand_predictions()
        preds[1] = SentencePrediction("d", 1, ("O",), ())
        with pytest.raises(EvaluationError, match="tags for"):
            EV.evaluate(hand_corpus(), preds)


class TestPredictionsFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "preds.jsonl"
        EV.write_predictions(path, hand_predictions())
        reloaded = EV.read_predictions(path)
        assert reloaded == hand_predictions()
        again = tmp_path / "again.jsonl"
        EV.write_predictions(again, reloaded)
        assert path.read_bytes() == again.read_bytes()

    @pytest.mark.parametrize("text,lineno,fragment", [
        ("not json\n", 1, "malformed"),
        ('{"doc_id": "d"}\n', 1, "record needs"),
        ('{"doc_id": "d", "sentence_index": 0, "tags": ["X"], "spans": []}\n',
         1, "unknown tag"),
        ('{"doc_id": "d", "sentence_index": 0, "tags": ["B"], '
         '"spans": [{"start": 0, "end": 2, "type_probs": {}, '
         '"predicted_types": []}]}\n', 1, "out of range"),
        ("", 1, "empty"),
    ])
    def test_parse_errors(self, text, lineno, fragment):
        with pytest.raises(EvaluationError, match=fragment) as err:
            EV.parse_predictions(text)
        assert err.value.line_number == lineno

    def test_probs_must_cover_all_types(self):
        text = ('{"doc_id": "d", "sentence_index": 0, "tags": ["B"], '
                '"spans": [{"start": 0, "end": 1, '
                '"type_probs": {"Physiological": 1.0}, '
                '"predicted_types": []}]}\n')
        with pytest.raises(EvaluationError, match="cover every"):
            EV.parse_predictions(text)


class TestReportDict:
    def test_shape(self):
        report = EV.evaluate(hand_corpus(), hand_predictions())
        d = EV.report_to_dict(report)
        assert set(d) == {"span", "token", "typing", "ranking"}
        assert d["span"]["n_matched"] == 1
        assert d["ranking"]["precision_at"]["1"] == 1.0
