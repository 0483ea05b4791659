"""Check an exported vector file against its corpus.

Reimplements the consuming engine's loading checks over the file alone:
a well-formed preamble, well-formed unique records, vector widths that
match the declared dimension, exactly one record per corpus sentence and
one vector per token. Returns human-readable problem strings; an empty
list means the pair is consistent.
"""

from __future__ import annotations

import json

from .corpus import Corpus


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def verify_export(corpus: Corpus, path) -> list[str]:
    problems: list[str] = []
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        return ["file is empty"]

    dim = None
    try:
        preamble = json.loads(lines[0])
    except json.JSONDecodeError:
        preamble = None
    if (isinstance(preamble, dict) and isinstance(preamble.get("dim"), int)
            and not isinstance(preamble.get("dim"), bool)
            and preamble["dim"] > 0):
        dim = preamble["dim"]
    else:
        problems.append("line 1: preamble must be an object with a positive "
                        "integer dim")

    token_counts: dict[tuple[str, int], int] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            record = json.loads(line)
        except json.JSONDecodeError:
            problems.append(f"line {lineno}: malformed JSON")
            continue
        if (not isinstance(record, dict)
                or not isinstance(record.get("doc_id"), str)
                or not isinstance(record.get("sentence_index"), int)
                or isinstance(record.get("sentence_index"), bool)
                or "vectors" not in record):
            problems.append(f"line {lineno}: record needs doc_id, "
                            "sentence_index, vectors")
            continue
        key = (record["doc_id"], record["sentence_index"])
        if key in token_counts:
            problems.append(f"line {lineno}: duplicate record for document "
                            f"{key[0]!r} sentence {key[1]}")
            continue
        vectors = record["vectors"]
        if (not isinstance(vectors, list) or not vectors
                or not all(isinstance(row, list) and row
                           and all(_is_number(x) for x in row)
                           for row in vectors)):
            problems.append(f"line {lineno}: vectors must be a nonempty list "
                            "of numeric token vectors")
            continue
        widths = {len(row) for row in vectors}
        if dim is not None and widths != {dim}:
            problems.append(f"line {lineno}: token vectors have "
                            f"{sorted(widths)} components, expected {dim}")
        token_counts[key] = len(vectors)

    expected: set[tuple[str, int]] = set()
    for doc in corpus.documents:
        for i, sentence in enumerate(doc.sentences):
            key = (doc.doc_id, i)
            expected.add(key)
            if key not in token_counts:
                problems.append(f"missing record for document {doc.doc_id!r} "
                                f"sentence {i}")
            elif token_counts[key] != len(sentence.tokens):
                problems.append(f"document {doc.doc_id!r} sentence {i} has "
                                f"{len(sentence.tokens)} tokens but "
                                f"{token_counts[key]} vectors")
    for key in token_counts:
        if key not in expected:
            problems.append(f"extra record for document {key[0]!r} "
                            f"sentence {key[1]}")
    return problems
