"""Corpus data model, file formats, and embedding tables.

Tagged corpus files are UTF-8 text with LF line endings:

    #doc <doc_id>
    <token>\\t<tag>
    ...
    #types: <T1>|<T2>
    <token>\\t<tag>
    ...
    #types:

A ``#doc`` header starts a document (an abstract). Each sentence is one
or more token lines, each carrying a ``B``, ``I``, or ``O`` tag, closed
by a ``#types:`` line naming the sentence's outcome types (bare
``#types:`` means none). A sentence names at least one outcome type
exactly when it contains at least one ``B`` tag; violating files are
rejected with a line number. Serialization is the exact inverse of
parsing, so serialize(parse(text)) == text for any valid file.

Static embedding files are headerless, one token per line followed by
its vector components separated by single spaces. Contextual embedding
files are JSON Lines: a preamble object ``{"dim": d}`` and then one
record per sentence with ``doc_id``, ``sentence_index``, and a
``vectors`` list holding one length-d list per token.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CorpusFormatError, EmbeddingError

TAGS = ("B", "I", "O")


@dataclass(frozen=True)
class TaggedSentence:
    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    outcome_types: tuple[str, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise CorpusFormatError(
                f"sentence has {len(self.tokens)} tokens but {len(self.tags)} tags")
        if len(self.tokens) == 0:
            raise CorpusFormatError("sentence has no tokens")
        for tag in self.tags:
            if tag not in TAGS:
                raise CorpusFormatError(f"unknown tag {tag!r}")
        has_b = "B" in self.tags
        if has_b and not self.outcome_types:
            raise CorpusFormatError("sentence has a B tag but no outcome types")
        if self.outcome_types and not has_b:
            raise CorpusFormatError("sentence has outcome types but no B tag")
        if len(set(self.outcome_types)) != len(self.outcome_types):
            raise CorpusFormatError("duplicate outcome types on one sentence")


@dataclass(frozen=True)
class Document:
    doc_id: str
    sentences: tuple[TaggedSentence, ...]


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]

    def __len__(self) -> int:
        return len(self.documents)

    def sentence_count(self) -> int:
        return sum(len(d.sentences) for d in self.documents)


@dataclass
class CorpusStats:
    n_abstracts: int
    n_sentences: int
    n_tokens: int
    n_spans: int
    type_counts: dict[str, int] = field(default_factory=dict)

    @property
    def n_types(self) -> int:
        return len(self.type_counts)

    @property
    def avg_sentence_length(self) -> float:
        return self.n_tokens / self.n_sentences if self.n_sentences else 0.0


def parse_corpus(text: str) -> Corpus:
    """Parse tagged corpus text, raising CorpusFormatError with a line number."""
    documents: list[Document] = []
    seen_ids: set[str] = set()
    doc_id: str | None = None
    doc_start_line = 0
    sentences: list[TaggedSentence] = []
    tokens: list[str] = []
    tags: list[str] = []

    def close_document(line_number: int) -> None:
        nonlocal doc_id, sentences
        if doc_id is None:
            return
        if tokens:
            raise CorpusFormatError("document ends inside a sentence", line_number)
        if not sentences:
            raise CorpusFormatError(f"document {doc_id!r} has no sentences",
                                    doc_start_line)
        documents.append(Document(doc_id, tuple(sentences)))
        doc_id = None
        sentences = []

    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for lineno, line in enumerate(lines, start=1):
        if line.startswith("#doc "):
            if tokens:
                raise CorpusFormatError("new document starts inside a sentence", lineno)
            close_document(lineno)
            new_id = line[len("#doc "):]
            if not new_id or new_id != new_id.strip():
                raise CorpusFormatError(f"bad document id {new_id!r}", lineno)
            if new_id in seen_ids:
                raise CorpusFormatError(f"duplicate document id {new_id!r}", lineno)
            seen_ids.add(new_id)
            doc_id = new_id
            doc_start_line = lineno
        elif line.startswith("#types:"):
            if doc_id is None:
                raise CorpusFormatError("types line before any #doc header", lineno)
            if not tokens:
                raise CorpusFormatError("types line without a preceding sentence", lineno)
            rest = line[len("#types:"):]
            if rest == "":
                types: tuple[str, ...] = ()
            elif rest.startswith(" "):
                parts = rest[1:].split("|")
                for part in parts:
                    if not part or part != part.strip():
                        raise CorpusFormatError(f"bad outcome type {part!r}", lineno)
                types = tuple(parts)
            else:
                raise CorpusFormatError("malformed types line", lineno)
            try:
                sentence = TaggedSentence(tuple(tokens), tuple(tags), types)
            except CorpusFormatError as err:
                raise CorpusFormatError(str(err), lineno) from None
            sentences.append(sentence)
            tokens = []
            tags = []
        elif line == "":
            raise CorpusFormatError("blank line not allowed", lineno)
        else:
            if doc_id is None:
                raise CorpusFormatError("token line before any #doc header", lineno)
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusFormatError("expected token<TAB>tag", lineno)
            token, tag = parts
            if not token:
                raise CorpusFormatError("empty token", lineno)
            if tag not in TAGS:
                raise CorpusFormatError(f"unknown tag {tag!r}", lineno)
            tokens.append(token)
            tags.append(tag)
    if tokens:
        raise CorpusFormatError("file ends inside a sentence", len(lines))
    close_document(len(lines))
    if not documents:
        raise CorpusFormatError("file contains no documents", 1)
    return Corpus(tuple(documents))


def serialize_corpus(corpus: Corpus) -> str:
    lines: list[str] = []
    for doc in corpus.documents:
        lines.append(f"#doc {doc.doc_id}")
        for sentence in doc.sentences:
            for token, tag in zip(sentence.tokens, sentence.tags):
                lines.append(f"{token}\t{tag}")
            if sentence.outcome_types:
                lines.append("#types: " + "|".join(sentence.outcome_types))
            else:
                lines.append("#types:")
    return "\n".join(lines) + "\n"


def read_corpus(path) -> Corpus:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_corpus(fh.read())


def write_corpus(path, corpus: Corpus) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(serialize_corpus(corpus))


def compute_stats(corpus: Corpus) -> CorpusStats:
    n_sentences = 0
    n_tokens = 0
    n_spans = 0
    type_counts: dict[str, int] = {}
    for doc in corpus.documents:
        for sentence in doc.sentences:
            n_sentences += 1
            n_tokens += len(sentence.tokens)
            n_spans += sentence.tags.count("B")
            for t in sentence.outcome_types:
                type_counts[t] = type_counts.get(t, 0) + 1
    return CorpusStats(len(corpus.documents), n_sentences, n_tokens, n_spans,
                       type_counts)


def combine_stats(a: CorpusStats, b: CorpusStats) -> CorpusStats:
    """Totals for the union of two disjoint corpora.

    Counts add; the average sentence length follows from the combined
    token and sentence totals, which makes it the length-weighted mean.
    """
    merged = dict(a.type_counts)
    for t, c in b.type_counts.items():
        merged[t] = merged.get(t, 0) + c
    return CorpusStats(a.n_abstracts + b.n_abstracts,
                       a.n_sentences + b.n_sentences,
                       a.n_tokens + b.n_tokens,
                       a.n_spans + b.n_spans,
                       merged)


def split_corpus(corpus: Corpus, fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """Split into train and held-out parts at document granularity.

    The document list is shuffled with the seed, then the first
    round(fraction * n) documents form the training part.
    """
    if not 0.0 <= fraction <= 1.0:
        raise CorpusFormatError(f"split fraction {fraction} outside [0, 1]")
    n = len(corpus.documents)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fraction * n))
    train = tuple(corpus.documents[i] for i in order[:n_train])
    held = tuple(corpus.documents[i] for i in order[n_train:])
    return Corpus(train), Corpus(held)


# ---------------------------------------------------------------------------
# static embeddings


class EmbeddingTable:
    """Token to vector lookup with a mean-vector fallback for unknown tokens."""

    def __init__(self, vectors: dict[str, np.ndarray], dim: int):
        if not vectors:
            raise EmbeddingError("embedding table is empty")
        self.dim = dim
        self.vectors = vectors
        self.unk_vector = np.mean(list(vectors.values()), axis=0)

    def lookup(self, token: str) -> np.ndarray:
        return self.vectors.get(token, self.unk_vector)

    def matrix_for(self, tokens) -> np.ndarray:
        """Stack token vectors as columns, giving shape (dim, n_tokens)."""
        return np.stack([self.lookup(t) for t in tokens], axis=1)


def parse_embeddings(text: str) -> EmbeddingTable:
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for lineno, line in enumerate(lines, start=1):
        if not line:
            raise EmbeddingError("blank line not allowed", lineno)
        parts = line.split(" ")
        if len(parts) < 2:
            raise EmbeddingError("expected token followed by vector components", lineno)
        token = parts[0]
        if not token:
            raise EmbeddingError("empty token", lineno)
        if token in vectors:
            raise EmbeddingError(f"duplicate token {token!r}", lineno)
        try:
            vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
        except ValueError:
            raise EmbeddingError("non-numeric vector component", lineno) from None
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise EmbeddingError(
                f"vector has {vec.shape[0]} components, expected {dim}", lineno)
        vectors[token] = vec
    if dim is None:
        raise EmbeddingError("embedding file is empty")
    return EmbeddingTable(vectors, dim)


def read_embeddings(path) -> EmbeddingTable:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_embeddings(fh.read())


# ---------------------------------------------------------------------------
# contextual embeddings


class ContextualStore:
    """Per-sentence token vectors keyed by (doc_id, sentence_index)."""

    def __init__(self, dim: int, records: dict[tuple[str, int], np.ndarray]):
        self.dim = dim
        self.records = records

    def matrix(self, doc_id: str, sentence_index: int) -> np.ndarray:
        """Vectors for one sentence as columns, shape (dim, n_tokens)."""
        key = (doc_id, sentence_index)
        if key not in self.records:
            raise EmbeddingError(f"no contextual vectors for {doc_id!r} "
                                 f"sentence {sentence_index}")
        return self.records[key].T

    def verify_coverage(self, corpus: Corpus) -> None:
        """Check every corpus sentence has vectors with matching token counts.

        Extra records for sentences outside the corpus are allowed.
        """
        for doc in corpus.documents:
            for i, sentence in enumerate(doc.sentences):
                key = (doc.doc_id, i)
                if key not in self.records:
                    raise EmbeddingError(f"missing contextual vectors for "
                                         f"{doc.doc_id!r} sentence {i}")
                n = self.records[key].shape[0]
                if n != len(sentence.tokens):
                    raise EmbeddingError(
                        f"{doc.doc_id!r} sentence {i}: {n} vectors for "
                        f"{len(sentence.tokens)} tokens")


def parse_contextual(text: str) -> ContextualStore:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise EmbeddingError("contextual embedding file is empty")
    try:
        preamble = json.loads(lines[0])
    except json.JSONDecodeError:
        raise EmbeddingError("malformed JSON", 1) from None
    if not isinstance(preamble, dict) or "dim" not in preamble:
        raise EmbeddingError("first line must be a preamble object with a dim key", 1)
    dim = preamble["dim"]
    if not isinstance(dim, int) or dim <= 0:
        raise EmbeddingError(f"bad dimension {dim!r}", 1)
    records: dict[tuple[str, int], np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            raise EmbeddingError("malformed JSON", lineno) from None
        try:
            key = (rec["doc_id"], rec["sentence_index"])
            vectors = rec["vectors"]
        except (TypeError, KeyError):
            raise EmbeddingError("record needs doc_id, sentence_index, vectors",
                                 lineno) from None
        if key in records:
            raise EmbeddingError(f"duplicate record for {key[0]!r} sentence {key[1]}",
                                 lineno)
        arr = np.array(vectors, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise EmbeddingError("vectors must be a nonempty list of token vectors",
                                 lineno)
        if arr.shape[1] != dim:
            raise EmbeddingError(
                f"token vectors have {arr.shape[1]} components, expected {dim}", lineno)
        records[key] = arr
    return ContextualStore(dim, records)


def read_contextual(path) -> ContextualStore:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_contextual(fh.read())


def serialize_contextual(store: ContextualStore) -> str:
    """Inverse of parse_contextual; float values survive the round trip exactly."""
    lines = [json.dumps({"dim": store.dim})]
    for (doc_id, idx) in sorted(store.records):
        arr = store.records[(doc_id, idx)]
        lines.append(json.dumps({"doc_id": doc_id, "sentence_index": idx,
                                 "vectors": arr.tolist()}))
    return "\n".join(lines) + "\n"


def write_contextual(path, store: ContextualStore) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(serialize_contextual(store))
