"""Configuration, batching, Adam, and the training loop.

Config files are flat ``key = value`` lines (blank lines and ``#``
comments allowed). The full key set is fixed; unknown keys are
rejected so typos cannot silently fall back to defaults. hidden_dim
left unset resolves by encoder mode: 300 for bilstm, 768 for
precomputed vectors.

Batches keep each abstract's sentences contiguous: every epoch shuffles
the abstract order with a seed derived from (seed, epoch), flattens to
sentence addresses, and chunks. One batch runs under one tape, each
abstract in it is encoded once for both its sentence states and its
context vector, and the batch loss is the mean joint loss over its
sentences. A non-finite batch loss aborts training immediately,
carrying the last parameters that produced a finite loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .corpus import ContextualStore, Corpus, EmbeddingTable
from .encoder import contextualize, encode_document, encode_sentence
from .errors import ConfigError, DivergenceError
from .model import ModelParams, forward_sentence, init_model
from .tensor import Tape, Tensor

DEFAULT_HIDDEN_DIM = {"bilstm": 300, "precomputed": 768}

_INT_KEYS = ("batch_size", "epochs", "hidden_dim", "attention_b", "seed")
_FLOAT_KEYS = ("dropout", "learning_rate", "oc_threshold")
_BOOL_KEYS = ("disable_attention", "disable_abstract_context")
_STR_KEYS = ("encoder_mode", "embeddings_path", "contextual_path")
CONFIG_KEYS = _INT_KEYS + _FLOAT_KEYS + _BOOL_KEYS + _STR_KEYS


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    dropout: float = 0.1
    epochs: int = 10
    learning_rate: float = 1e-3
    hidden_dim: int | None = None
    attention_b: int = 200
    seed: int = 0
    encoder_mode: str = "bilstm"
    embeddings_path: str | None = None
    contextual_path: str | None = None
    disable_attention: bool = False
    disable_abstract_context: bool = False
    oc_threshold: float = 0.5

    def resolved_hidden_dim(self) -> int:
        if self.hidden_dim is not None:
            return self.hidden_dim
        return DEFAULT_HIDDEN_DIM[self.encoder_mode]


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _INT_KEYS:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} needs an integer, got {raw!r}") from None
    if key in _FLOAT_KEYS:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key} needs a number, got {raw!r}") from None
    if key in _BOOL_KEYS:
        if raw == "true":
            return True
        if raw == "false":
            return False
        raise ConfigError(f"{key} needs true or false, got {raw!r}")
    return raw


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into a typed mapping."""
    values: dict = {}
    for lineno, line in enumerate(text.split("\n"), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    return values


def parse_override(item: str) -> tuple[str, object]:
    """Parse one ``key=value`` override as passed on a command line."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, _, raw = item.partition("=")
    key = key.strip()
    if key not in CONFIG_KEYS:
        raise ConfigError(f"unknown key {key!r}")
    return key, _parse_value(key, raw)


def build_config(values: dict) -> TrainConfig:
    config = TrainConfig(**values)
    if config.batch_size < 1:
        raise ConfigError(f"batch_size must be at least 1, got {config.batch_size}")
    if not 0.0 <= config.dropout < 1.0:
        raise ConfigError(f"dropout must be in [0, 1), got {config.dropout}")
    if config.epochs < 0:
        raise ConfigError(f"epochs must not be negative, got {config.epochs}")
    if config.learning_rate <= 0.0:
        raise ConfigError(f"learning_rate must be positive, got {config.learning_rate}")
    if config.hidden_dim is not None and config.hidden_dim < 1:
        raise ConfigError(f"hidden_dim must be positive, got {config.hidden_dim}")
    if config.attention_b < 1:
        raise ConfigError(f"attention_b must be positive, got {config.attention_b}")
    if config.encoder_mode not in DEFAULT_HIDDEN_DIM:
        raise ConfigError(f"unknown encoder mode {config.encoder_mode!r}")
    if not 0.0 <= config.oc_threshold <= 1.0:
        raise ConfigError(f"oc_threshold must be in [0, 1], got {config.oc_threshold}")
    return config


def read_config(path) -> TrainConfig:
    with open(path, encoding="utf-8") as fh:
        return build_config(parse_config_text(fh.read()))


# ---------------------------------------------------------------------------
# batching


def make_batches(corpus: Corpus, batch_size: int, seed) -> list[list[tuple[int, int]]]:
    """Chunk (document_index, sentence_index) pairs with shuffled documents.

    Documents are shuffled as whole units so each one's sentences stay
    contiguous; only then is the flat order cut into batches.
    """
    order = np.random.default_rng(seed).permutation(len(corpus.documents))
    flat = [(int(d), s)
            for d in order
            for s in range(len(corpus.documents[int(d)].sentences))]
    return [flat[i:i + batch_size] for i in range(0, len(flat), batch_size)]


# ---------------------------------------------------------------------------
# optimizer


@dataclass(frozen=True)
class AdamState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


def init_adam(params: ModelParams) -> AdamState:
    return AdamState(0,
                     {name: np.zeros(t.shape) for name, t in params.named()},
                     {name: np.zeros(t.shape) for name, t in params.named()})


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdamState,
              learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update, returning fresh parameter tensors."""
    t = state.step + 1
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    mapping: dict[str, Tensor] = {}
    for name, tensor in params.named():
        g = grads[name]
        m = beta1 * state.m[name] + (1.0 - beta1) * g
        v = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        update = learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
        mapping[name] = T.parameter(tensor.values - update)
    return params.with_tensors(mapping), AdamState(t, new_m, new_v)


# ---------------------------------------------------------------------------
# training loop


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    mean_loss: float
    n_sentences: int


@dataclass(frozen=True)
class TrainResult:
    params: ModelParams
    log: tuple[EpochLog, ...]


def _check_embeddings(config: TrainConfig, embeddings, corpus: Corpus):
    if config.encoder_mode == "bilstm":
        if not isinstance(embeddings, EmbeddingTable):
            raise ConfigError("bilstm mode needs a static embedding table")
        return embeddings.dim
    if not isinstance(embeddings, ContextualStore):
        raise ConfigError("precomputed mode needs a contextual embedding store")
    embeddings.verify_coverage(corpus)
    return None


def train(corpus: Corpus, config: TrainConfig, embeddings) -> TrainResult:
    """Run the full training loop and return final parameters plus the log."""
    if corpus.sentence_count() == 0:
        raise ConfigError("training corpus has no sentences")
    input_dim = _check_embeddings(config, embeddings, corpus)
    params = init_model(config.encoder_mode, config.resolved_hidden_dim(), input_dim,
                        config.attention_b, np.random.default_rng(config.seed))
    adam = init_adam(params)
    dropout_rng = np.random.default_rng([config.seed, 997])
    log: list[EpochLog] = []
    last_good = params

    for epoch in range(config.epochs):
        batches = make_batches(corpus, config.batch_size, [config.seed, epoch])
        loss_sum = 0.0
        n_sentences = 0
        for batch in batches:
            grouped: list[tuple[int, list[int]]] = []
            for doc_idx, sent_idx in batch:
                if grouped and grouped[-1][0] == doc_idx:
                    grouped[-1][1].append(sent_idx)
                else:
                    grouped.append((doc_idx, [sent_idx]))
            with Tape() as tape:
                losses = []
                for doc_idx, sentence_indices in grouped:
                    doc = corpus.documents[doc_idx]
                    if config.disable_abstract_context:
                        ctx = T.zeros(params.hidden_dim)
                        states = {i: encode_sentence(doc.sentences[i], embeddings,
                                                     params.encoder,
                                                     address=(doc.doc_id, i))
                                  for i in sentence_indices}
                    else:
                        all_states, ctx = encode_document(doc, embeddings,
                                                          params.encoder)
                        states = {i: all_states[i] for i in sentence_indices}
                    for i in sentence_indices:
                        sentence = doc.sentences[i]
                        hidden = contextualize(states[i], ctx)
                        fw = forward_sentence(
                            hidden, ctx, params,
                            gold_tags=sentence.tags,
                            gold_types=sentence.outcome_types,
                            attention_enabled=not config.disable_attention,
                            dropout_rate=config.dropout,
                            dropout_rng=dropout_rng if config.dropout > 0 else None)
                        losses.append(fw.loss())
                total = losses[0]
                for extra in losses[1:]:
                    total = T.add(total, extra)
                batch_loss = T.scale(total, 1.0 / len(losses))
                value = batch_loss.item()
                if not np.isfinite(value):
                    raise DivergenceError(
                        f"non-finite loss {value} in epoch {epoch}", last_good)
                last_good = params
                named = params.named()
                grads = T.backward(tape, batch_loss,
                                   leaves=[t for _, t in named])
            by_name = {name: grads[t] for name, t in named}
            params, adam = adam_step(params, by_name, adam, config.learning_rate)
            loss_sum += value * len(losses)
            n_sentences += len(losses)
        log.append(EpochLog(epoch, loss_sum / n_sentences, n_sentences))
    return TrainResult(params, tuple(log))
