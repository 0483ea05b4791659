"""Joint span tagging and outcome typing over encoded sentences.

The token path scores each token for the three span tags. Both an
attention route and a direct linear route score every (label, token)
pair; their sum weights the token's hidden vector, giving one
label-specific representation per tag whose head score becomes that
tag's logit. Tagging loss is softmax cross-entropy summed over tokens.

The sentence path builds, for each detected span, a matrix with one row
per span token (the token's merged attention weight at its own tag,
times its hidden vector, plus the abstract context). Label attention
over those rows yields one representation per outcome type, scored by a
shared sigmoid head. Typing loss is elementwise binary cross-entropy
summed over the five types, and the joint loss is the exact sum of the
tagging loss and every span's typing loss.

Both attention levels share one parameter shape: a projection ``v``, a
per-label scoring matrix ``w`` whose result is normalized (over tags
per token at the token level, over span tokens per type at the sentence
level), and an unnormalized direct matrix ``u``. Disabling attention
replaces the normalized and direct weights with uniform constants of
the same shapes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import tensor as T
from .corpus import Document
from .encoder import EncoderParams, HiddenStates, contextualize, encode_document, \
    init_encoder
from .errors import CheckpointError, StateError
from .tensor import Tensor

TOKEN_LABELS = ("B", "I", "O")
OUTCOME_TYPES = ("Physiological", "Mortality", "Life-Impact", "Resource-use",
                 "Adverse-effects")

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class AttentionParams:
    w: Tensor  # (n_labels, width) per-label scoring
    v: Tensor  # (width, hidden_dim) shared projection
    u: Tensor  # (n_labels, hidden_dim) direct scoring


@dataclass(frozen=True)
class ScoringHead:
    weight: Tensor  # (hidden_dim,)
    bias: Tensor  # scalar


@dataclass(frozen=True)
class ModelParams:
    encoder: EncoderParams
    token_attention: AttentionParams
    sentence_attention: AttentionParams
    token_head: ScoringHead
    sentence_head: ScoringHead
    attention_width: int

    @property
    def hidden_dim(self) -> int:
        return self.encoder.hidden_dim

    def named(self) -> list[tuple[str, Tensor]]:
        out = self.encoder.named()
        for group, p in (("token_attention", self.token_attention),
                         ("sentence_attention", self.sentence_attention)):
            out.extend([(f"{group}.w", p.w), (f"{group}.v", p.v), (f"{group}.u", p.u)])
        for group, head in (("token_head", self.token_head),
                            ("sentence_head", self.sentence_head)):
            out.extend([(f"{group}.weight", head.weight), (f"{group}.bias", head.bias)])
        return out

    def with_tensors(self, mapping: dict[str, Tensor]) -> "ModelParams":
        def att(group: str, p: AttentionParams) -> AttentionParams:
            return AttentionParams(mapping.get(f"{group}.w", p.w),
                                   mapping.get(f"{group}.v", p.v),
                                   mapping.get(f"{group}.u", p.u))

        def head(group: str, h: ScoringHead) -> ScoringHead:
            return ScoringHead(mapping.get(f"{group}.weight", h.weight),
                               mapping.get(f"{group}.bias", h.bias))

        return replace(self, encoder=self.encoder.with_tensors(mapping),
                       token_attention=att("token_attention", self.token_attention),
                       sentence_attention=att("sentence_attention",
                                              self.sentence_attention),
                       token_head=head("token_head", self.token_head),
                       sentence_head=head("sentence_head", self.sentence_head))


def init_model(mode: str, hidden_dim: int, input_dim: int | None,
               attention_width: int, rng: np.random.Generator) -> ModelParams:
    encoder = init_encoder(mode, hidden_dim, input_dim, rng)
    k = encoder.hidden_dim
    b = attention_width

    def attention(n_labels: int) -> AttentionParams:
        return AttentionParams(
            w=T.parameter(rng.uniform(-1 / np.sqrt(b), 1 / np.sqrt(b),
                                      size=(n_labels, b))),
            v=T.parameter(rng.uniform(-1 / np.sqrt(k), 1 / np.sqrt(k), size=(b, k))),
            u=T.parameter(rng.uniform(-1 / np.sqrt(k), 1 / np.sqrt(k),
                                      size=(n_labels, k))))

    def head() -> ScoringHead:
        return ScoringHead(
            weight=T.parameter(rng.uniform(-1 / np.sqrt(k), 1 / np.sqrt(k), size=k)),
            bias=T.parameter(0.0))

    return ModelParams(encoder=encoder,
                       token_attention=attention(len(TOKEN_LABELS)),
                       sentence_attention=attention(len(OUTCOME_TYPES)),
                       token_head=head(), sentence_head=head(),
                       attention_width=b)


# ---------------------------------------------------------------------------
# attention


def token_attention(hc: Tensor, p: AttentionParams,
                    enabled: bool = True) -> tuple[Tensor, Tensor]:
    """Score every (tag, token) pair of a (hidden_dim, n) matrix.

    Returns the normalized weights (columns sum to 1 over the tags) and
    the unnormalized direct weights, both (n_tags, n). With attention
    disabled both are uniform constants of the same shapes.
    """
    n_labels = p.w.shape[0]
    if not enabled:
        uniform = Tensor(np.full((n_labels, hc.shape[1]), 1.0 / n_labels))
        return uniform, uniform
    z = T.tanh(T.matmul(p.v, hc))
    a1 = T.softmax(T.matmul(p.w, z), axis=0)
    a2 = T.matmul(p.u, hc)
    return a1, a2


def sentence_attention(o_s: Tensor, p: AttentionParams,
                       enabled: bool = True) -> tuple[Tensor, Tensor]:
    """Score every (type, span token) pair of an (m, hidden_dim) span matrix.

    Returns the normalized weights (rows sum to 1 over the span tokens)
    and the unnormalized direct weights, both (n_types, m).
    """
    n_labels = p.w.shape[0]
    if not enabled:
        uniform = Tensor(np.full((n_labels, o_s.shape[0]), 1.0 / o_s.shape[0]))
        return uniform, uniform
    ost = T.transpose(o_s)
    z = T.tanh(T.matmul(p.v, ost))
    a1 = T.softmax(T.matmul(p.w, z), axis=1)
    a2 = T.matmul(p.u, ost)
    return a1, a2


def label_word_representation(a1_col: Tensor, a2_col: Tensor,
                              hc_col: Tensor) -> Tensor:
    """Per-token label representations: one hidden-vector row per tag."""
    return T.outer(T.add(a1_col, a2_col), hc_col)


def token_logits(e_n: Tensor, head: ScoringHead) -> Tensor:
    """Tag logits for one token from its (n_tags, hidden_dim) representation."""
    return T.add_scalar(T.matmul(e_n, head.weight), head.bias)


def span_type_representation(o_s: Tensor, p: AttentionParams,
                             enabled: bool = True) -> Tensor:
    """Pool span rows into one representation per outcome type, (n_types, k)."""
    a1, a2 = sentence_attention(o_s, p, enabled)
    return T.matmul(T.add(a1, a2), o_s)


# ---------------------------------------------------------------------------
# losses


def osd_loss(logits: Tensor, gold_tags: Sequence[str]) -> Tensor:
    """Softmax cross-entropy summed over tokens.

    ``logits`` is (n_tags, n) with one column per token. Computed as
    logsumexp minus the gold logit per column, which never forms a bare
    exponential or logarithm of a probability.
    """
    indices = [TOKEN_LABELS.index(t) for t in gold_tags]
    lse = T.logsumexp_cols(logits)
    gold = T.select_per_column(logits, indices)
    return T.sum_all(T.sub(lse, gold))


def oc_loss(z: Tensor, gold_types: Sequence[str]) -> Tensor:
    """Binary cross-entropy summed over the outcome types.

    ``z`` holds the five pre-sigmoid scores. Uses the stable identity
    -[y log p + (1-y) log(1-p)] = softplus(z) - y z.
    """
    y = Tensor(np.array([1.0 if t in gold_types else 0.0 for t in OUTCOME_TYPES]))
    return T.sum_all(T.sub(T.softplus(z), T.mul(y, z)))


def joint_loss(osd: Tensor, oc_losses: Sequence[Tensor]) -> Tensor:
    total = osd
    for loss in oc_losses:
        total = T.add(total, loss)
    return total


# ---------------------------------------------------------------------------
# decoding


def decode_spans(tags: Sequence[str]) -> list[tuple[int, int]]:
    """Contiguous spans as (start, end) with exclusive end.

    A span opens at B, or at I when none is open; it extends through I
    and closes before O or the next B. An open span closes at the end.
    """
    spans: list[tuple[int, int]] = []
    start: int | None = None
    for i, tag in enumerate(tags):
        if tag == "B":
            if start is not None:
                spans.append((start, i))
            start = i
        elif tag == "I":
            if start is None:
                start = i
        else:
            if start is not None:
                spans.append((start, i))
                start = None
    if start is not None:
        spans.append((start, len(tags)))
    return spans


# ---------------------------------------------------------------------------
# sentence forward pass


@dataclass
class SpanForward:
    start: int
    end: int
    probs: Tensor  # (n_types,)
    loss: Tensor | None
    a1: Tensor
    a2: Tensor


@dataclass
class SentenceForward:
    logits: Tensor  # (n_tags, n)
    a1: Tensor
    a2: Tensor
    predicted_tags: tuple[str, ...]
    osd: Tensor | None
    spans: list[SpanForward]

    def loss(self) -> Tensor:
        if self.osd is None:
            raise StateError("forward pass was run without gold tags")
        return joint_loss(self.osd, [s.loss for s in self.spans if s.loss is not None])


def forward_sentence(hidden: HiddenStates, ctx: Tensor, params: ModelParams, *,
                     gold_tags: Sequence[str] | None = None,
                     gold_types: Sequence[str] | None = None,
                     attention_enabled: bool = True,
                     dropout_rate: float = 0.0,
                     dropout_rng: np.random.Generator | None = None) -> SentenceForward:
    """Run the token and span paths over one context-injected sentence.

    With ``gold_tags`` the tagging loss is computed and spans follow the
    gold tags (and gold labels select the span rows); otherwise spans
    follow the predicted tags. ``gold_types`` additionally enables the
    typing loss for every span. Dropout masks are drawn from
    ``dropout_rng`` in a fixed order: the hidden matrix first, then each
    span matrix left to right.
    """
    if not hidden.context_injected:
        raise StateError("forward_sentence: abstract context was never injected")
    hc = hidden.matrix
    use_dropout = dropout_rate > 0.0
    if use_dropout:
        if dropout_rng is None:
            raise StateError("dropout needs a generator for its masks")
        mask = (dropout_rng.random(hc.shape) >= dropout_rate).astype(np.float64)
        hc = T.dropout_apply(hc, mask, dropout_rate)

    a1, a2 = token_attention(hc, params.token_attention, attention_enabled)
    merged = T.add(a1, a2)
    q = T.matmul(params.token_head.weight, hc)
    logits = T.add_scalar(T.mul_rowvec(merged, q), params.token_head.bias)
    predicted = tuple(TOKEN_LABELS[i] for i in np.argmax(logits.values, axis=0))

    osd = osd_loss(logits, gold_tags) if gold_tags is not None else None
    source_tags = tuple(gold_tags) if gold_tags is not None else predicted
    indices = [TOKEN_LABELS.index(t) for t in source_tags]
    spans = decode_spans(source_tags)

    span_results: list[SpanForward] = []
    if spans:
        coeff = T.select_per_column(merged, indices)
        rows = T.add(T.mul_colvec(T.transpose(hc), coeff), ctx)
        for start, end in spans:
            o_s = T.stack_rows([T.row(rows, t) for t in range(start, end)])
            if use_dropout:
                mask = (dropout_rng.random(o_s.shape) >= dropout_rate)
                o_s = T.dropout_apply(o_s, mask.astype(np.float64), dropout_rate)
            sa1, sa2 = sentence_attention(o_s, params.sentence_attention,
                                          attention_enabled)
            e_s = T.matmul(T.add(sa1, sa2), o_s)
            z = T.add_scalar(T.matmul(e_s, params.sentence_head.weight),
                             params.sentence_head.bias)
            loss = oc_loss(z, gold_types) if gold_types is not None else None
            span_results.append(SpanForward(start, end, T.sigmoid(z), loss, sa1, sa2))

    return SentenceForward(logits, a1, a2, predicted, osd, span_results)


# ---------------------------------------------------------------------------
# prediction


@dataclass(frozen=True)
class SpanPrediction:
    start: int
    end: int
    type_probs: dict[str, float]
    predicted_types: tuple[str, ...]


@dataclass(frozen=True)
class SentencePrediction:
    doc_id: str
    sentence_index: int
    tags: tuple[str, ...]
    spans: tuple[SpanPrediction, ...]


def _span_prediction(fw: SpanForward, threshold: float) -> SpanPrediction:
    probs = {t: float(p) for t, p in zip(OUTCOME_TYPES, fw.probs.values)}
    chosen = tuple(t for t in OUTCOME_TYPES if probs[t] >= threshold)
    return SpanPrediction(fw.start, fw.end, probs, chosen)


def predict_document(doc: Document, embeddings, params: ModelParams, *,
                     threshold: float = 0.5, attention_enabled: bool = True,
                     context_enabled: bool = True,
                     gold_spans: bool = False) -> list[SentencePrediction]:
    """Predict tags and span types for every sentence of one document.

    With ``gold_spans`` the span boundaries and reported tags come from
    the gold annotation and only the types are predicted, which isolates
    typing quality from tagging quality.
    """
    states, ctx = encode_document(doc, embeddings, params.encoder)
    if not context_enabled:
        ctx = T.zeros(params.hidden_dim)
    out: list[SentencePrediction] = []
    for i, sentence in enumerate(doc.sentences):
        hidden = contextualize(states[i], ctx)
        fw = forward_sentence(hidden, ctx, params,
                              gold_tags=sentence.tags if gold_spans else None,
                              attention_enabled=attention_enabled)
        tags = sentence.tags if gold_spans else fw.predicted_tags
        spans = tuple(_span_prediction(s, threshold) for s in fw.spans)
        out.append(SentencePrediction(doc.doc_id, i, tuple(tags), spans))
    return out


# ---------------------------------------------------------------------------
# checkpoints


def checkpoint_to_json(params: ModelParams) -> str:
    """Serialize all parameters; key order and float repr are deterministic."""
    tensors = {name: {"shape": list(t.shape), "values": t.values.ravel().tolist()}
               for name, t in params.named()}
    obj = {
        "format_version": CHECKPOINT_VERSION,
        "encoder_mode": params.encoder.mode,
        "hidden_dim": params.encoder.hidden_dim,
        "input_dim": params.encoder.input_dim,
        "attention_width": params.attention_width,
        "token_labels": list(TOKEN_LABELS),
        "outcome_types": list(OUTCOME_TYPES),
        "tensors": tensors,
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def save_checkpoint(path, params: ModelParams) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(checkpoint_to_json(params))


def checkpoint_from_json(text: str) -> ModelParams:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as err:
        raise CheckpointError(f"malformed checkpoint JSON: {err}") from None
    if not isinstance(obj, dict):
        raise CheckpointError("checkpoint is not a JSON object")
    version = obj.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version!r}, "
                              f"expected {CHECKPOINT_VERSION}")
    if tuple(obj.get("token_labels", ())) != TOKEN_LABELS:
        raise CheckpointError("checkpoint token label order does not match")
    if tuple(obj.get("outcome_types", ())) != OUTCOME_TYPES:
        raise CheckpointError("checkpoint outcome type order does not match")

    skeleton = init_model(obj["encoder_mode"], obj["hidden_dim"], obj["input_dim"],
                          obj["attention_width"], np.random.default_rng(0))
    expected = {name: t.shape for name, t in skeleton.named()}
    stored = obj.get("tensors", {})
    missing = sorted(set(expected) - set(stored))
    extra = sorted(set(stored) - set(expected))
    if missing or extra:
        raise CheckpointError(f"checkpoint tensors do not match model: "
                              f"missing {missing}, unexpected {extra}")
    mapping: dict[str, Tensor] = {}
    for name, shape in expected.items():
        entry = stored[name]
        arr = np.array(entry["values"], dtype=np.float64)
        if list(entry["shape"]) != list(shape) or arr.size != int(np.prod(shape)):
            raise CheckpointError(f"tensor {name} has shape {entry['shape']}, "
                                  f"expected {list(shape)}")
        mapping[name] = T.parameter(arr.reshape(shape))
    return skeleton.with_tensors(mapping)


def load_checkpoint(path) -> ModelParams:
    with open(path, encoding="utf-8", newline="") as fh:
        return checkpoint_from_json(fh.read())
