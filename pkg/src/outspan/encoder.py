"""Token encoders and abstract-level context.

Two encoder modes produce the per-token hidden matrix H with one column
per token:

* ``bilstm`` runs a bidirectional LSTM over static word embeddings and
  concatenates the two direction states, so each column has hidden_dim
  entries (hidden_dim must be even).
* ``precomputed`` takes contextual token vectors from a file as-is; the
  encoder then has no trainable parameters and hidden_dim equals the
  stored vector dimension.

The abstract context vector is the mean over every token column of
every sentence in the document. Injecting it adds the same vector to
each token column exactly once; a second injection is an error.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .corpus import ContextualStore, Document, EmbeddingTable, TaggedSentence
from .errors import ConfigError, StateError
from .tensor import Tensor

ENCODER_MODES = ("bilstm", "precomputed")


@dataclass(frozen=True)
class DirectionParams:
    """One LSTM direction: gate weights stacked as [input, forget, cell, output]."""

    w_x: Tensor  # (4h, d)
    w_h: Tensor  # (4h, h)
    bias: Tensor  # (4h,)


@dataclass(frozen=True)
class EncoderParams:
    mode: str
    hidden_dim: int
    input_dim: int | None = None
    forward_dir: DirectionParams | None = None
    backward_dir: DirectionParams | None = None

    def named(self, prefix: str = "encoder") -> list[tuple[str, Tensor]]:
        if self.mode == "precomputed":
            return []
        out = []
        for side, p in (("forward", self.forward_dir), ("backward", self.backward_dir)):
            out.extend([(f"{prefix}.{side}.w_x", p.w_x),
                        (f"{prefix}.{side}.w_h", p.w_h),
                        (f"{prefix}.{side}.bias", p.bias)])
        return out

    def with_tensors(self, mapping: dict[str, Tensor],
                     prefix: str = "encoder") -> "EncoderParams":
        if self.mode == "precomputed":
            return self
        sides = {}
        for side, p in (("forward", self.forward_dir), ("backward", self.backward_dir)):
            sides[side] = DirectionParams(
                w_x=mapping.get(f"{prefix}.{side}.w_x", p.w_x),
                w_h=mapping.get(f"{prefix}.{side}.w_h", p.w_h),
                bias=mapping.get(f"{prefix}.{side}.bias", p.bias))
        return replace(self, forward_dir=sides["forward"],
                       backward_dir=sides["backward"])


@dataclass(frozen=True)
class HiddenStates:
    """Per-token hidden vectors as columns of a (hidden_dim, n_tokens) matrix."""

    matrix: Tensor
    context_injected: bool = False


def init_encoder(mode: str, hidden_dim: int, input_dim: int | None,
                 rng: np.random.Generator) -> EncoderParams:
    if mode not in ENCODER_MODES:
        raise ConfigError(f"unknown encoder mode {mode!r}")
    if hidden_dim <= 0:
        raise ConfigError(f"hidden_dim must be positive, got {hidden_dim}")
    if mode == "precomputed":
        return EncoderParams(mode=mode, hidden_dim=hidden_dim)
    if hidden_dim % 2 != 0:
        raise ConfigError(f"bilstm hidden_dim must be even, got {hidden_dim}")
    if input_dim is None or input_dim <= 0:
        raise ConfigError("bilstm mode needs a positive embedding dimension")
    h = hidden_dim // 2
    bound = 1.0 / np.sqrt(hidden_dim)

    def direction() -> DirectionParams:
        w_x = rng.uniform(-bound, bound, size=(4 * h, input_dim))
        w_h = rng.uniform(-bound, bound, size=(4 * h, h))
        bias = rng.uniform(-bound, bound, size=4 * h)
        bias[h:2 * h] += 1.0  # forget gate starts open
        return DirectionParams(T.parameter(w_x), T.parameter(w_h), T.parameter(bias))

    return EncoderParams(mode=mode, hidden_dim=hidden_dim, input_dim=input_dim,
                         forward_dir=direction(), backward_dir=direction())


def _run_direction(x: Tensor, p: DirectionParams, order: list[int]) -> list[Tensor]:
    """One LSTM pass over the columns of x in the given order.

    Returns the hidden state for each column, indexed by original position.
    """
    h_size = p.w_h.shape[1]
    pre_all = T.matmul(p.w_x, x)  # all input projections in one product
    h = T.zeros(h_size)
    c = T.zeros(h_size)
    outputs: list[Tensor | None] = [None] * x.shape[1]
    for t in order:
        pre = T.add(T.add(T.column(pre_all, t), T.matmul(p.w_h, h)), p.bias)
        gate_in = T.sigmoid(T.slice_vec(pre, 0, h_size))
        gate_forget = T.sigmoid(T.slice_vec(pre, h_size, 2 * h_size))
        candidate = T.tanh(T.slice_vec(pre, 2 * h_size, 3 * h_size))
        gate_out = T.sigmoid(T.slice_vec(pre, 3 * h_size, 4 * h_size))
        c = T.add(T.mul(gate_forget, c), T.mul(gate_in, candidate))
        h = T.mul(gate_out, T.tanh(c))
        outputs[t] = h
    return outputs


def encode_sentence(sentence: TaggedSentence, embeddings, params: EncoderParams,
                    address: tuple[str, int] | None = None) -> HiddenStates:
    """Encode one sentence to a (hidden_dim, n_tokens) matrix.

    In precomputed mode ``address`` names the (doc_id, sentence_index)
    whose stored vectors to use.
    """
    if params.mode == "bilstm":
        if not isinstance(embeddings, EmbeddingTable):
            raise ConfigError("bilstm mode needs a static embedding table")
        if embeddings.dim != params.input_dim:
            raise ConfigError(f"embedding dimension {embeddings.dim} does not match "
                              f"encoder input dimension {params.input_dim}")
        x = Tensor(embeddings.matrix_for(sentence.tokens))
        n = x.shape[1]
        fwd = _run_direction(x, params.forward_dir, list(range(n)))
        bwd = _run_direction(x, params.backward_dir, list(range(n - 1, -1, -1)))
        matrix = T.concat([T.stack_cols(fwd), T.stack_cols(bwd)], axis=0)
        return HiddenStates(matrix)
    if not isinstance(embeddings, ContextualStore):
        raise ConfigError("precomputed mode needs a contextual embedding store")
    if embeddings.dim != params.hidden_dim:
        raise ConfigError(f"contextual dimension {embeddings.dim} does not match "
                          f"hidden dimension {params.hidden_dim}")
    if address is None:
        raise ConfigError("precomputed mode needs the sentence address")
    stored = embeddings.matrix(*address)
    if stored.shape[1] != len(sentence.tokens):
        raise ConfigError(f"{address[0]!r} sentence {address[1]}: "
                          f"{stored.shape[1]} vectors for {len(sentence.tokens)} tokens")
    return HiddenStates(Tensor(stored))


def encode_document(doc: Document, embeddings,
                    params: EncoderParams) -> tuple[list[HiddenStates], Tensor]:
    """Encode every sentence once and pool the abstract context from the result.

    Returns the per-sentence hidden states (context not yet injected) and
    the context vector, the mean over all token columns in the document.
    """
    states = [encode_sentence(s, embeddings, params, address=(doc.doc_id, i))
              for i, s in enumerate(doc.sentences)]
    all_tokens = T.concat([hs.matrix for hs in states], axis=1) \
        if len(states) > 1 else states[0].matrix
    ctx = T.mean_pool(all_tokens, axis=1)
    return states, ctx


def abstract_context(doc: Document, embeddings, params: EncoderParams) -> Tensor:
    """Mean hidden vector over every token of every sentence in the document."""
    return encode_document(doc, embeddings, params)[1]


def contextualize(hidden: HiddenStates, ctx: Tensor) -> HiddenStates:
    """Add the abstract context vector to every token column, once."""
    if hidden.context_injected:
        raise StateError("contextualize: context already injected")
    summed = T.transpose(T.add(T.transpose(hidden.matrix), ctx))
    return HiddenStates(summed, context_injected=True)
