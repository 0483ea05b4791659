"""Corpus parsing, serialization, stats, splitting, and embedding files."""

import numpy as np
import pytest

from outspan import corpus as C
from outspan.errors import CorpusFormatError, EmbeddingError

VALID = (
    "#doc trial_001\n"
    "We\tO\n"
    "observed\tO\n"
    "decreased\tO\n"
    "incisional\tB\n"
    "hernia\tI\n"
    "rates\tO\n"
    "#types: Physiological\n"
    "No\tO\n"
    "deaths\tB\n"
    "occurred\tO\n"
    "#types: Mortality|Adverse-effects\n"
    "#doc trial_002\n"
    "Patients\tO\n"
    "were\tO\n"
    "randomized\tO\n"
    "#types:\n"
)


class TestParsing:
    def test_structure(self):
        corpus = C.parse_corpus(VALID)
        assert len(corpus.documents) == 2
        doc = corpus.documents[0]
        assert doc.doc_id == "trial_001"
        assert len(doc.sentences) == 2
        first = doc.sentences[0]
        assert first.tokens == ("We", "observed", "decreased", "incisional",
                                "hernia", "rates")
        assert first.tags == ("O", "O", "O", "B", "I", "O")
        assert first.outcome_types == ("Physiological",)
        assert doc.sentences[1].outcome_types == ("Mortality", "Adverse-effects")
        assert corpus.documents[1].sentences[0].outcome_types == ()

    def test_round_trip_is_byte_identical(self):
        assert C.serialize_corpus(C.parse_corpus(VALID)) == VALID

    def test_type_order_preserved(self):
        text = "#doc d\na\tB\n#types: Mortality|Physiological\n"
        assert C.serialize_corpus(C.parse_corpus(text)) == text

    def test_type_names_may_contain_spaces(self):
        text = "#doc d\na\tB\n#types: P 0|P 1\n"
        sentence = C.parse_corpus(text).documents[0].sentences[0]
        assert sentence.outcome_types == ("P 0", "P 1")
        assert C.serialize_corpus(C.parse_corpus(text)) == text

    @pytest.mark.parametrize("text,lineno,fragment", [
        ("#doc d\na\tB\n#types:\n", 3, "no outcome types"),
        ("#doc d\na\tO\n#types: Mortality\n", 3, "no B tag"),
        ("#doc d\na\tB\n#types: Mortality|Mortality\n", 3, "duplicate outcome"),
        ("#doc d\na\tX\n#types:\n", 2, "unknown tag"),
        ("#doc d\na b\n#types:\n", 2, "token<TAB>tag"),
        ("#doc d\n\na\tO\n#types:\n", 2, "blank line"),
        ("a\tO\n#types:\n", 1, "before any #doc"),
        ("#doc d\n#types:\n", 2, "without a preceding sentence"),
        ("#doc d\na\tO\n", 2, "ends inside a sentence"),
        ("#doc d\n#doc e\na\tO\n#types:\n", 1, "no sentences"),
        ("#doc d\na\tO\n#types:\n#doc d\nb\tO\n#types:\n", 4, "duplicate document id"),
        ("#doc d\na\tO\n#types:x\n", 3, "malformed types"),
        ("#doc d\na\tB\n#types:  Mortality\n", 3, "bad outcome type"),
    ])
    def test_errors_carry_line_numbers(self, text, lineno, fragment):
        with pytest.raises(CorpusFormatError, match=fragment) as err:
            C.parse_corpus(text)
        assert err.value.line_number == lineno

    def test_empty_file_rejected(self):
        with pytest.raises(CorpusFormatError, match="no documents"):
            C.parse_corpus("")

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "corpus.txt"
        C.write_corpus(path, C.parse_corpus(VALID))
        assert path.read_bytes().decode("utf-8") == VALID
        assert C.read_corpus(path) == C.parse_corpus(VALID)


class TestStats:
    def test_counts_by_hand(self):
        stats = C.compute_stats(C.parse_corpus(VALID))
        assert stats.n_abstracts == 2
        assert stats.n_sentences == 3
        assert stats.n_tokens == 12
        assert stats.n_spans == 2
        assert stats.type_counts == {"Physiological": 1, "Mortality": 1,
                                     "Adverse-effects": 1}
        assert stats.n_types == 3
        assert stats.avg_sentence_length == pytest.approx(4.0)

    def test_combine_is_additive_with_weighted_mean_length(self):
        a = C.CorpusStats(300, 5193, 5193 * 21, 400, {"Physiological": 10})
        b = C.CorpusStats(5000, 40092, 40092 * 26, 900,
                          {"Physiological": 5, "Mortality": 2})
        merged = C.combine_stats(a, b)
        assert merged.n_abstracts == 5300
        assert merged.n_sentences == 45285
        assert merged.n_spans == 1300
        assert merged.type_counts == {"Physiological": 15, "Mortality": 2}
        expected = (5193 * 21 + 40092 * 26) / 45285
        assert merged.avg_sentence_length == pytest.approx(expected)
        assert round(merged.avg_sentence_length) == 25


def document(i):
    sentence = C.TaggedSentence(("tok",), ("O",), ())
    return C.Document(f"d{i}", (sentence,))


class TestSplit:
    def test_sizes_match_rounded_fraction(self):
        corpus = C.Corpus(tuple(document(i) for i in range(5300)))
        train, held = C.split_corpus(corpus, 0.8, seed=0)
        assert len(train.documents) == 4240
        assert len(held.documents) == 1060

    def test_deterministic_and_disjoint(self):
        corpus = C.Corpus(tuple(document(i) for i in range(10)))
        t1, h1 = C.split_corpus(corpus, 0.7, seed=3)
        t2, h2 = C.split_corpus(corpus, 0.7, seed=3)
        assert t1 == t2 and h1 == h2
        ids = [d.doc_id for d in t1.documents] + [d.doc_id for d in h1.documents]
        assert sorted(ids) == sorted(d.doc_id for d in corpus.documents)

    def test_bad_fraction_rejected(self):
        corpus = C.Corpus((document(0),))
        with pytest.raises(CorpusFormatError):
            C.split_corpus(corpus, 1.5, seed=0)


EMB = (
    "the 0.1 0.2 0.3\n"
    "hernia 1.0 0.0 0.0\n"
    "rates 0.0 1.0 0.0\n"
)


class TestStaticEmbeddings:
    def test_lookup_and_unknown_fallback(self):
        table = C.parse_embeddings(EMB)
        assert table.dim == 3
        np.testing.assert_allclose(table.lookup("hernia"), [1.0, 0.0, 0.0])
        mean = np.array([1.1, 1.2, 0.3]) / 3
        np.testing.assert_allclose(table.lookup("unseen"), mean)

    def test_matrix_for_stacks_columns(self):
        table = C.parse_embeddings(EMB)
        m = table.matrix_for(["hernia", "rates"])
        assert m.shape == (3, 2)
        np.testing.assert_allclose(m[:, 0], [1.0, 0.0, 0.0])

    @pytest.mark.parametrize("text,lineno", [
        ("the 0.1 0.2\nhernia 1.0\n", 2),
        ("the 0.1\nthe 0.2\n", 2),
        ("the\n", 1),
        ("the 0.1 x\n", 1),
    ])
    def test_errors_carry_line_numbers(self, text, lineno):
        with pytest.raises(EmbeddingError) as err:
            C.parse_embeddings(text)
        assert err.value.line_number == lineno

    def test_empty_rejected(self):
        with pytest.raises(EmbeddingError, match="empty"):
            C.parse_embeddings("")


def small_store():
    return C.ContextualStore(2, {
        ("trial_001", 0): np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]]),
        ("trial_001", 1): np.array([[1.0, -1.0]]),
    })


class TestContextualEmbeddings:
    def test_round_trip_preserves_floats_exactly(self):
        text = C.serialize_contextual(small_store())
        reloaded = C.parse_contextual(text)
        assert reloaded.dim == 2
        for key, arr in small_store().records.items():
            assert np.array_equal(reloaded.records[key], arr)
        assert C.serialize_contextual(reloaded) == text

    def test_matrix_orientation(self):
        m = small_store().matrix("trial_001", 0)
        assert m.shape == (2, 3)
        np.testing.assert_allclose(m[:, 0], [0.1, 0.2])

    def test_coverage_checks(self):
        text = ("#doc trial_001\n"
                "a\tO\nb\tO\nc\tO\n#types:\n"
                "d\tO\n#types:\n")
        corpus = C.parse_corpus(text)
        small_store().verify_coverage(corpus)
        missing = C.ContextualStore(2, {("trial_001", 0): np.zeros((3, 2))})
        with pytest.raises(EmbeddingError, match="missing contextual"):
            missing.verify_coverage(corpus)
        short = C.ContextualStore(2, {("trial_001", 0): np.zeros((2, 2)),
                                      ("trial_001", 1): np.zeros((1, 2))})
        with pytest.raises(EmbeddingError, match="2 vectors for 3 tokens"):
            short.verify_coverage(corpus)

    def test_superset_coverage_allowed(self):
        corpus = C.parse_corpus("#doc trial_001\na\tO\n#types:\n")
        extra = C.ContextualStore(2, {("trial_001", 0): np.zeros((1, 2)),
                                      ("other", 0): np.zeros((4, 2))})
        extra.verify_coverage(corpus)

    @pytest.mark.parametrize("text,lineno", [
        ("not json\n", 1),
        ('{"nodim": 1}\n', 1),
        ('{"dim": 2}\n{"doc_id": "d"}\n', 2),
        ('{"dim": 2}\n{"doc_id": "d", "sentence_index": 0, "vectors": [[1.0]]}\n', 2),
        ('{"dim": 2}\n'
         '{"doc_id": "d", "sentence_index": 0, "vectors": [[1.0, 2.0]]}\n'
         '{"doc_id": "d", "sentence_index": 0, "vectors": [[1.0, 2.0]]}\n', 3),
    ])
    def test_errors_carry_line_numbers(self, text, lineno):
        with pytest.raises(EmbeddingError) as err:
            C.parse_contextual(text)
        assert err.value.line_number == lineno

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "ctx.jsonl"
        C.write_contextual(path, small_store())
        reloaded = C.read_contextual(path)
        assert np.array_equal(reloaded.records[("trial_001", 0)],
                              small_store().records[("trial_001", 0)])
