"""Sentence encoder: local attention, global shift, and mixed embeddings.

Per document, the encoder derives three vectors per sentence:

  local   L_i = sum_j a_ij * token_ij, a_i = softmax of per-token scores
  shift   G_k = attention over ALL document tokens, scored on the
          differences (token - L_k) but summing the ORIGINAL tokens
  mixed   M_k = L_k + G_k

Every output is therefore a linear combination of the document's token
embeddings, which is the structural property the whole package is built
around. Tokens are frozen: no gradient is ever produced for them.

Ablation variants replace either attention stage with plain average
pooling or drop the shift entirely.

The per-sentence computations are independent given the inputs and are
evaluated here as batched array ops with a fixed summation order, so
results are bit-identical however the work is scheduled.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .documents import Document
from .errors import DimensionMismatch
from .scorer import (
    TINIEST,
    ScorerGrad,
    ScorerParams,
    scorer_batch_backward,
    scorer_batch_forward,
    softmax,
)


class Variant(enum.Enum):
    """Encoder ablations: which stages are learnable attention."""

    FULL = "full"
    NO_GLOBAL = "no-global"
    NO_LOCAL = "no-local"
    NO_EITHER = "no-either"

    @property
    def has_local_attention(self) -> bool:
        return self in (Variant.FULL, Variant.NO_GLOBAL)

    @property
    def has_global_shift(self) -> bool:
        return self in (Variant.FULL, Variant.NO_LOCAL)


@dataclass
class EncoderParams:
    """The two attention scorers; both take dim-sized inputs."""

    local_scorer: ScorerParams
    global_scorer: ScorerParams

    def validate(self) -> None:
        self.local_scorer.validate()
        self.global_scorer.validate()
        if self.local_scorer.input_dim != self.global_scorer.input_dim:
            raise DimensionMismatch(
                f"scorer input dims differ: local {self.local_scorer.input_dim}, "
                f"global {self.global_scorer.input_dim}"
            )

    @property
    def dim(self) -> int:
        return self.local_scorer.input_dim


@dataclass
class EncodeResult:
    """Per-sentence outputs plus the attention weights that produced them.

    local, shifts and mixed are (n, dim). local_weights has one
    (l_i,)-vector per sentence. global_weights is (n, N) over all
    document tokens in document order, or None for variants that do not
    compute a shift. mixed == local + shifts always holds (for dropped
    stages the corresponding term is exactly zero).
    """

    local: np.ndarray
    shifts: np.ndarray
    mixed: np.ndarray
    local_weights: list[np.ndarray]
    global_weights: np.ndarray | None


@dataclass
class EncoderGrad:
    local_scorer: ScorerGrad
    global_scorer: ScorerGrad


def _row_softmax(scores: np.ndarray) -> np.ndarray:
    # max-subtraction per row, same stabilization and positivity floor
    # as scorer.softmax
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return np.maximum(e / e.sum(axis=1, keepdims=True), TINIEST)


def average_pool(doc: Document) -> np.ndarray:
    """Per-sentence mean of token embeddings, shape (n, dim)."""
    return np.stack([s.mean(axis=0) for s in doc.sentences])


def _uniform_weights(doc: Document) -> list[np.ndarray]:
    return [np.full(l, 1.0 / l) for l in doc.sentence_lengths]


def local_embed(
    doc: Document, local_scorer: ScorerParams
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Attention-pooled sentence embeddings L_i and their weights."""
    embeds, weights, _ = _local_forward(doc, local_scorer)
    return embeds, weights


def _local_forward(doc: Document, scorer: ScorerParams):
    tokens = doc.all_tokens()
    scores, tanh_cache = scorer_batch_forward(scorer, tokens)
    embeds = np.empty((doc.num_sentences, doc.dim))
    weights = []
    start = 0
    for i, length in enumerate(doc.sentence_lengths):
        a = softmax(scores[start : start + length])
        weights.append(a)
        embeds[i] = a @ tokens[start : start + length]
        start += length
    return embeds, weights, tanh_cache


def global_shift(
    doc: Document, local: np.ndarray, global_scorer: ScorerParams
) -> tuple[np.ndarray, np.ndarray]:
    """Shift vectors G_k and their document-wide attention weights.

    For each target sentence k the scorer sees the differences
    (token - L_k) for every token in the document, including sentence
    k's own tokens. The softmax runs over all tokens at once, and the
    weighted sum recombines the original token embeddings, not the
    differences.
    """
    shifts, weights, _, _ = _global_forward(doc, local, global_scorer)
    return shifts, weights


def _global_forward(doc: Document, local: np.ndarray, scorer: ScorerParams):
    tokens = doc.all_tokens()
    if local.shape != (doc.num_sentences, doc.dim):
        raise DimensionMismatch(
            f"local embeddings shape {local.shape} does not match document "
            f"({doc.num_sentences}, {doc.dim})"
        )
    diffs = tokens[None, :, :] - local[:, None, :]  # (n, N, dim)
    scores, tanh_cache = scorer_batch_forward(scorer, diffs)  # (n, N)
    weights = _row_softmax(scores)
    shifts = weights @ tokens
    return shifts, weights, diffs, tanh_cache


def encode(doc: Document, params: EncoderParams, variant: Variant) -> EncodeResult:
    """Run the encoder for one document under the given variant."""
    doc.validate()
    if doc.dim != params.dim:
        raise DimensionMismatch(
            f"document dim {doc.dim} does not match scorer input dim {params.dim}"
        )
    if variant.has_local_attention:
        local, local_weights, _ = _local_forward(doc, params.local_scorer)
    else:
        local = average_pool(doc)
        local_weights = _uniform_weights(doc)
    if variant.has_global_shift:
        shifts, global_weights, _, _ = _global_forward(doc, local, params.global_scorer)
    else:
        shifts = np.zeros_like(local)
        global_weights = None
    return EncodeResult(
        local=local,
        shifts=shifts,
        mixed=local + shifts,
        local_weights=local_weights,
        global_weights=global_weights,
    )


def encode_backward(
    doc: Document, params: EncoderParams, variant: Variant, upstream: np.ndarray
) -> EncoderGrad:
    """Exact analytic gradients of both scorers for d(loss)/d(mixed).

    The local scorer receives both gradient paths: the direct one through
    L_k in the mixed embedding, and the indirect one through L_k inside
    the shift scorer's input (token - L_k) and hence through the global
    attention weights. Variants without a learnable stage get exact
    zeros for that stage. Token embeddings receive no gradient.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (doc.num_sentences, doc.dim):
        raise DimensionMismatch(
            f"upstream shape {upstream.shape} does not match mixed embeddings "
            f"({doc.num_sentences}, {doc.dim})"
        )
    grad = EncoderGrad(
        local_scorer=ScorerGrad.zeros_like(params.local_scorer),
        global_scorer=ScorerGrad.zeros_like(params.global_scorer),
    )
    if variant is Variant.NO_EITHER:
        return grad

    tokens = doc.all_tokens()
    if variant.has_local_attention:
        local, local_weights, local_tanh = _local_forward(doc, params.local_scorer)
    else:
        local = average_pool(doc)

    d_local = upstream.copy()
    if variant.has_global_shift:
        _, weights, diffs, tanh_cache = _global_forward(doc, local, params.global_scorer)
        d_weights = upstream @ tokens.T  # (n, N)
        weighted = (weights * d_weights).sum(axis=1, keepdims=True)
        d_scores = weights * (d_weights - weighted)
        d_diffs = scorer_batch_backward(
            params.global_scorer, diffs, tanh_cache, d_scores, grad.global_scorer
        )
        # diffs = token - L_k, so the shift stage pulls -sum_t d_diffs into L_k
        d_local -= d_diffs.sum(axis=1)

    if variant.has_local_attention:
        start = 0
        for i, length in enumerate(doc.sentence_lengths):
            seg = slice(start, start + length)
            sent_tokens = tokens[seg]
            a = local_weights[i]
            d_a = sent_tokens @ d_local[i]
            d_scores = a * (d_a - a @ d_a)
            scorer_batch_backward(
                params.local_scorer, sent_tokens, local_tanh[seg], d_scores, grad.local_scorer
            )
            start += length
    return grad
