"""Unsupervised label alignment between two annotated corpora.

To merge a corpus annotated with its own label set into the five-type
scheme, each label on both sides gets a centroid: the mean over all of
its spans of the span's mean token vector (a span carries every outcome
type of its sentence). Cosine distance between centroids fills a
source-by-target matrix, where the target side is annotated with
fine-grained outcome domain codes, each having a parent among the five
outcome types.

Assignment walks the target columns: every domain picks its closest
source label, and each source label adopts the parent type of the
closest domain it won. A source label that wins no column falls back to
its own row minimum, which the provenance records, as it does ties
(broken toward the earlier column).

Merging rewrites the source corpus's sentence type lists through the
mapping, leaving every other byte intact, and concatenates the
document lists. Duplicate document ids are an error; optional prefixes
namespace the two sides.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import ContextualStore, Corpus, Document, EmbeddingTable, TaggedSentence
from .errors import AlignmentError
from .model import OUTCOME_TYPES, decode_spans

_LIFE_IMPACT_CODES = tuple(f"P {n}" for n in range(25, 35))

DEFAULT_DOMAIN_PARENTS = {
    "P 0": "Physiological",
    "P 1": "Mortality",
    **{code: "Life-Impact" for code in _LIFE_IMPACT_CODES},
    "P 35": "Resource-use",
    "P 36": "Resource-use",
    "P 37": "Life-Impact",
    "P 38": "Adverse-effects",
}


@dataclass(frozen=True, eq=False)
class LabelEmbedding:
    label: str
    centroid: np.ndarray
    support: int  # number of spans averaged


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    values: np.ndarray


@dataclass(frozen=True)
class MappingEntry:
    source_label: str
    outcome_type: str
    via_domain: str
    distance: float
    method: str  # "column" or "row-fallback"
    tied: bool


def _sentence_token_vectors(sentence: TaggedSentence, vectors,
                            address: tuple[str, int]) -> np.ndarray:
    """Token vectors for one sentence as rows, from either vector source."""
    if isinstance(vectors, EmbeddingTable):
        return vectors.matrix_for(sentence.tokens).T
    if isinstance(vectors, ContextualStore):
        return vectors.matrix(*address).T
    raise AlignmentError("vectors must be an embedding table or a contextual store")


def span_embedding(token_vectors: np.ndarray) -> np.ndarray:
    """Mean of a span's token vectors, given as rows."""
    if token_vectors.ndim != 2 or token_vectors.shape[0] == 0:
        raise AlignmentError("span embedding needs at least one token vector")
    return token_vectors.mean(axis=0)


def label_embeddings(corpus: Corpus, vectors) -> dict[str, LabelEmbedding]:
    """Centroid per label over every span carrying it.

    A span carries all of its sentence's outcome types, so one span can
    contribute to several centroids.
    """
    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    for doc in corpus.documents:
        for i, sentence in enumerate(doc.sentences):
            if not sentence.outcome_types:
                continue
            rows = _sentence_token_vectors(sentence, vectors, (doc.doc_id, i))
            for start, end in decode_spans(sentence.tags):
                vec = span_embedding(rows[start:end])
                for label in sentence.outcome_types:
                    if label in sums:
                        sums[label] = sums[label] + vec
                        counts[label] += 1
                    else:
                        sums[label] = vec.copy()
                        counts[label] = 1
    return {label: LabelEmbedding(label, sums[label] / counts[label], counts[label])
            for label in sums}


def label_embedding(corpus: Corpus, label: str, vectors) -> LabelEmbedding:
    table = label_embeddings(corpus, vectors)
    if label not in table:
        raise AlignmentError(f"no spans carry label {label!r}")
    return table[label]


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    if u.shape != v.shape:
        raise AlignmentError(f"vector dimensions differ: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise AlignmentError("cosine distance undefined for a zero vector")
    return float(1.0 - (u @ v) / (nu * nv))


def distance_matrix(source: dict[str, LabelEmbedding],
                    target: dict[str, LabelEmbedding]) -> DistanceMatrix:
    """All pairwise centroid distances, rows = source, columns = target.

    Label order is sorted on both axes so the matrix is reproducible
    regardless of corpus iteration order.
    """
    if not source or not target:
        raise AlignmentError("both corpora need at least one labeled span")
    rows = tuple(sorted(source))
    cols = tuple(sorted(target))
    values = np.empty((len(rows), len(cols)))
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            try:
                values[i, j] = cosine_distance(source[r].centroid,
                                               target[c].centroid)
            except AlignmentError as err:
                raise AlignmentError(f"{r!r} vs {c!r}: {err}") from None
    return DistanceMatrix(rows, cols, values)


def derive_mapping(matrix: DistanceMatrix,
                   domain_parents: dict[str, str] | None = None
                   ) -> list[MappingEntry]:
    """Assign every source label to an outcome type via its best domain.

    Each target domain column first elects the source label closest to
    it. A label that won columns takes the parent type of the closest
    one; a label that won none takes the parent of its row's closest
    domain, recorded as a fallback.
    """
    parents = DEFAULT_DOMAIN_PARENTS if domain_parents is None else domain_parents
    for col in matrix.col_labels:
        if col not in parents:
            raise AlignmentError(f"target domain {col!r} has no parent outcome type")
        if parents[col] not in OUTCOME_TYPES:
            raise AlignmentError(f"domain {col!r} parent {parents[col]!r} is not an "
                                 f"outcome type")
    values = matrix.values
    won: dict[int, list[tuple[float, int]]] = {}
    for j in range(len(matrix.col_labels)):
        col = values[:, j]
        i = int(np.argmin(col))
        won.setdefault(i, []).append((float(col[i]), j))
    entries = []
    for i, label in enumerate(matrix.row_labels):
        if i in won:
            dist, j = min(won[i])
            tied = sum(1 for d, _ in won[i] if d == dist) > 1
            method = "column"
        else:
            row = values[i]
            j = int(np.argmin(row))
            dist = float(row[j])
            tied = int(np.count_nonzero(row == dist)) > 1
            method = "row-fallback"
        domain = matrix.col_labels[j]
        entries.append(MappingEntry(label, parents[domain], domain, dist,
                                    method, tied))
    return entries


def mapping_as_dict(entries: list[MappingEntry]) -> dict[str, str]:
    return {e.source_label: e.outcome_type for e in entries}


def align_corpora(source: Corpus, target: Corpus, vectors,
                  domain_parents: dict[str, str] | None = None
                  ) -> tuple[list[MappingEntry], DistanceMatrix]:
    """Full pipeline: centroids, distance matrix, mapping."""
    matrix = distance_matrix(label_embeddings(source, vectors),
                             label_embeddings(target, vectors))
    return derive_mapping(matrix, domain_parents), matrix


# ---------------------------------------------------------------------------
# relabeling and merging


def map_types(corpus: Corpus, mapping: dict[str, str]) -> Corpus:
    """Rewrite every sentence's type list through the mapping.

    Rewritten lists collapse duplicates, keeping first occurrences, so
    two source labels may land on one type. Labels missing from the
    mapping are an error.
    """
    docs = []
    for doc in corpus.documents:
        sentences = []
        for sentence in doc.sentences:
            new_types: list[str] = []
            for t in sentence.outcome_types:
                if t not in mapping:
                    raise AlignmentError(f"label {t!r} has no mapping")
                mapped = mapping[t]
                if mapped not in new_types:
                    new_types.append(mapped)
            sentences.append(TaggedSentence(sentence.tokens, sentence.tags,
                                            tuple(new_types)))
        docs.append(Document(doc.doc_id, tuple(sentences)))
    return Corpus(tuple(docs))


def merge_corpora(source: Corpus, target: Corpus, mapping: dict[str, str],
                  source_prefix: str = "", target_prefix: str = "") -> Corpus:
    """Relabel the source corpus and concatenate it with the target.

    Target sentences pass through untouched. Document ids must be
    unique after the optional prefixes are applied; collisions are all
    reported at once.
    """
    relabeled = map_types(source, mapping)

    def prefixed(corpus: Corpus, prefix: str) -> list[Document]:
        if not prefix:
            return list(corpus.documents)
        return [Document(prefix + d.doc_id, d.sentences) for d in corpus.documents]

    docs = prefixed(relabeled, source_prefix) + prefixed(target, target_prefix)
    seen: dict[str, int] = {}
    for d in docs:
        seen[d.doc_id] = seen.get(d.doc_id, 0) + 1
    collisions = sorted(doc_id for doc_id, n in seen.items() if n > 1)
    if collisions:
        raise AlignmentError(f"duplicate document ids after merge: {collisions}")
    return Corpus(tuple(docs))


# ---------------------------------------------------------------------------
# report formats


def matrix_to_tsv(matrix: DistanceMatrix) -> str:
    lines = ["\t" + "\t".join(matrix.col_labels)]
    for i, label in enumerate(matrix.row_labels):
        cells = "\t".join(repr(v) for v in matrix.values[i].tolist())
        lines.append(f"{label}\t{cells}")
    return "\n".join(lines) + "\n"


def entries_to_dict(entries: list[MappingEntry], vector_source: str) -> dict:
    return {
        "vector_source": vector_source,
        "mapping": mapping_as_dict(entries),
        "entries": [{"source_label": e.source_label,
                     "outcome_type": e.outcome_type,
                     "via_domain": e.via_domain,
                     "distance": e.distance,
                     "method": e.method,
                     "tied": e.tied} for e in entries],
    }
