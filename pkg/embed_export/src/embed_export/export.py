"""Run a pretrained transformer over a corpus and write word vectors.

The output is a JSONL file: the first line is a preamble recording the
vector dimension once, every later line carries doc_id, sentence_index
and one vector per corpus token, in corpus order regardless of how
sentences were batched. A word the tokenizer splits into several pieces
gets the configured pooling of its piece vectors from the selected
hidden layer; special tokens the tokenizer adds are never pooled.

Heavy dependencies (torch, transformers) are imported inside export()
so that corpus handling and verification stay light.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .corpus import read_corpus
from .errors import ExportError

POOLING_MODES = ("mean", "first")


@dataclass(frozen=True)
class ExportConfig:
    corpus_path: str
    model: str
    output_path: str
    layer: int | str = "last"  # index into the hidden-state stack, 0 = embeddings
    pooling: str = "mean"
    batch_size: int = 16
    revision: str | None = None


@dataclass(frozen=True)
class ExportSummary:
    n_documents: int
    n_sentences: int
    dim: int


def resolve_layer(layer, n_states: int) -> int:
    """Normalize a layer selector against the model's hidden-state stack."""
    if layer == "last":
        return n_states - 1
    if isinstance(layer, bool) or not isinstance(layer, int):
        raise ExportError(f"layer must be an integer or 'last', got {layer!r}")
    if not -n_states <= layer < n_states:
        raise ExportError(f"layer {layer} is out of range: the model exposes "
                          f"{n_states} hidden states")
    return layer % n_states


def export(config: ExportConfig) -> ExportSummary:
    if config.pooling not in POOLING_MODES:
        raise ExportError(f"unknown pooling mode {config.pooling!r}")
    if config.batch_size < 1:
        raise ExportError("batch_size must be positive")
    corpus = read_corpus(config.corpus_path)

    import torch
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(config.model,
                                              revision=config.revision)
    model = AutoModel.from_pretrained(config.model, revision=config.revision)
    model.eval()
    layer = resolve_layer(config.layer, model.config.num_hidden_layers + 1)
    limit = (int(getattr(model.config, "max_position_embeddings", 0))
             or int(tokenizer.model_max_length))

    addressed = [(doc.doc_id, i, sentence.tokens)
                 for doc in corpus.documents
                 for i, sentence in enumerate(doc.sentences)]
    lines: list[str] = []
    dim = 0
    for base in range(0, len(addressed), config.batch_size):
        batch = addressed[base:base + config.batch_size]
        encoded = tokenizer([list(tokens) for _, _, tokens in batch],
                            is_split_into_words=True, padding=True,
                            truncation=False, return_tensors="pt")
        lengths = encoded["attention_mask"].sum(dim=1)
        for j, (doc_id, index, _) in enumerate(batch):
            if int(lengths[j]) > limit:
                raise ExportError(
                    f"document {doc_id!r} sentence {index} needs "
                    f"{int(lengths[j])} positions but the model stops at "
                    f"{limit}; split the sentence upstream")
        with torch.no_grad():
            hidden = model(**encoded, output_hidden_states=True).hidden_states[layer]
        states = hidden.to(torch.float64).numpy()
        if not lines:
            dim = int(states.shape[-1])
            lines.append(json.dumps({"dim": dim}))
        for j, (doc_id, index, tokens) in enumerate(batch):
            positions: dict[int, list[int]] = {}
            for pos, word in enumerate(encoded.word_ids(j)):
                if word is not None:
                    positions.setdefault(word, []).append(pos)
            vectors = []
            for w, token in enumerate(tokens):
                where = positions.get(w)
                if not where:
                    raise ExportError(
                        f"tokenizer produced no pieces for token {token!r} "
                        f"(document {doc_id!r} sentence {index})")
                rows = states[j][where]
                pooled = rows.mean(axis=0) if config.pooling == "mean" else rows[0]
                vectors.append(pooled.tolist())
            lines.append(json.dumps({"doc_id": doc_id, "sentence_index": index,
                                     "vectors": vectors}))
    with open(config.output_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    return ExportSummary(len(corpus.documents), len(addressed), dim)
