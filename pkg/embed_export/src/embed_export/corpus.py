"""Minimal reader for the tagged corpus grammar.

The exporter only needs document ids, sentence boundaries and tokens, so
this parser enforces the structural rules of the grammar (headers, token
lines, sentence terminators, tag vocabulary) and ignores the outcome
types that terminator lines carry.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import CorpusFormatError

TAGS = ("B", "I", "O")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class Document:
    doc_id: str
    sentences: tuple[Sentence, ...]


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]


def parse_corpus(text: str) -> Corpus:
    """Parse corpus text, raising CorpusFormatError with a line number."""
    documents: list[Document] = []
    seen_ids: set[str] = set()
    doc_id: str | None = None
    doc_start_line = 0
    sentences: list[Sentence] = []
    tokens: list[str] = []

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
                raise CorpusFormatError("types line without a preceding sentence",
                                        lineno)
            rest = line[len("#types:"):]
            if rest != "" and not rest.startswith(" "):
                raise CorpusFormatError("malformed types line", lineno)
            sentences.append(Sentence(tuple(tokens)))
            tokens = []
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
    if tokens:
        raise CorpusFormatError("file ends inside a sentence", len(lines))
    close_document(len(lines))
    if not documents:
        raise CorpusFormatError("file contains no documents", 1)
    return Corpus(tuple(documents))


def read_corpus(path) -> Corpus:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_corpus(fh.read())
