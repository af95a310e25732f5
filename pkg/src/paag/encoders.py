"""Question encoder and question-aware review reader.

Both sides share one embedding matrix but use separate bidirectional
LSTMs. The reader scores each review word against every question
position, keeps the strongest question match per word, normalises the
scores into a word attention, pools each review into a summary vector,
and finally fuses the summaries through a bilinear gate against the
question's final state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from paag import autograd as ag
from paag.autograd import Tensor
from paag.data import PAD, UNK
from paag.errors import ContractError, DimensionError, MaskError


class Embedding:
    """Token embedding with a pinned all-zero PAD row.

    The weight is multiplied by a constant row mask, so the PAD row
    contributes zeros to every lookup and receives zero gradient: the
    optimizer can never move it. Ids at or beyond the table size are
    copy-extended ids and fall back to the UNK row.
    """

    def __init__(self, weight: Tensor):
        self.weight = weight
        mask = np.ones(weight.shape)
        mask[PAD, :] = 0.0
        self._row_mask = Tensor(mask)

    @property
    def vocab_size(self) -> int:
        return self.weight.shape[0]

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    def map_ids(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and ids.min() < 0:
            raise ContractError(f"embedding: negative token id in {ids.tolist()!r}")
        return np.where(ids >= self.vocab_size, UNK, ids)

    def __call__(self, ids: np.ndarray) -> Tensor:
        table = ag.mul(self.weight, self._row_mask)
        return ag.take(table, self.map_ids(ids))


class LSTMCell:
    """Plain LSTM with one fused weight, gate layout [i, f, g, o]."""

    def __init__(self, weight: Tensor, bias: Tensor):
        if weight.ndim != 2 or weight.shape[1] % 4 != 0:
            raise DimensionError(f"lstm: weight shape {weight.shape} is not (in+h, 4h)")
        self.weight = weight
        self.bias = bias
        self.hidden = weight.shape[1] // 4

    def step(self, x: Tensor, h: Tensor, c: Tensor):
        hid = self.hidden
        z = ag.add(ag.matmul(ag.concat([x, h]), self.weight), self.bias)
        i = ag.sigmoid(z[0:hid])
        f = ag.sigmoid(z[hid:2 * hid])
        g = ag.tanh(z[2 * hid:3 * hid])
        o = ag.sigmoid(z[3 * hid:4 * hid])
        c2 = ag.add(ag.mul(f, c), ag.mul(i, g))
        h2 = ag.mul(o, ag.tanh(c2))
        return h2, c2


class BiLSTM:
    """Two independent direction cells over one embedded sequence.

    Padded steps carry the previous state through unchanged and emit an
    all-zero output row, so downstream attention sees exact zeros and
    the final states are those at the sequence boundaries of the real
    tokens.
    """

    def __init__(self, forward: LSTMCell, backward: LSTMCell):
        self.forward = forward
        self.backward = backward

    def _run(self, cell: LSTMCell, emb: Tensor, mask: np.ndarray, order):
        hid = cell.hidden
        h = ag.zeros((hid,))
        c = ag.zeros((hid,))
        outputs: List[Optional[Tensor]] = [None] * emb.shape[0]
        final = h
        for t in order:
            if mask[t]:
                h, c = cell.step(emb[t], h, c)
                outputs[t] = h
                final = h
            else:
                outputs[t] = ag.zeros((hid,))
        return outputs, final

    def encode(self, emb: Tensor, mask: Optional[np.ndarray] = None):
        """Returns (states (T, 2h), final (2h,)), final = [fwd last, bwd first]."""
        T = emb.shape[0]
        if mask is None:
            mask = np.ones(T, dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (T,):
            raise MaskError(f"bilstm: mask shape {mask.shape} does not match length {T}")
        if not mask.any():
            raise MaskError("bilstm: mask excludes every token")
        fwd, fwd_final = self._run(self.forward, emb, mask, range(T))
        bwd, bwd_final = self._run(self.backward, emb, mask, range(T - 1, -1, -1))
        states = ag.stack([ag.concat([fwd[t], bwd[t]]) for t in range(T)])
        return states, ag.concat([fwd_final, bwd_final])


@dataclass
class EncodedQuestion:
    states: Tensor          # (Tq, 2h)
    final: Tensor           # (2h,)
    mask: np.ndarray        # (Tq,) bool


@dataclass
class EncodedReviews:
    word_states: List[Tensor]       # per review, (Tj, 2h)
    word_masks: List[np.ndarray]
    word_attention: List[Tensor]    # per review, (Tj,)
    summaries: Tensor               # (R, 2h)
    review_mask: np.ndarray         # (R,) bool
    gates: Tensor                   # (R,) fusion weights, zero on filler rows
    fused: Tensor                   # (2h,) weighted summary of summaries


def review_word_attention(q_states: Tensor, q_mask: np.ndarray,
                          r_states: Tensor, r_mask: np.ndarray,
                          w_question: Tensor, w_review: Tensor, score_v: Tensor):
    """Attention of one review's words against the question.

    Each (question position, review word) pair is scored through a
    shared tanh bottleneck; per review word only the strongest question
    position survives, then the masked softmax runs over review words.
    Returns (alpha (Tj,), pooled (2h,)).
    """
    q_proj = ag.matmul(q_states, w_question)      # (Tq, a)
    r_proj = ag.matmul(r_states, w_review)        # (Tj, a)
    pair = ag.tanh(ag.outer_add(q_proj, r_proj))  # (Tq, Tj, a)
    scores = ag.sum_(ag.mul(pair, score_v), axis=2)  # (Tq, Tj)
    pair_mask = np.broadcast_to(np.asarray(q_mask, dtype=bool)[:, None], scores.shape)
    best = ag.max_(scores, axis=0, mask=pair_mask)   # (Tj,)
    alpha = ag.softmax(best, mask=r_mask)
    pooled = ag.matmul(alpha, r_states)
    return alpha, pooled


def gated_fusion(summaries: Tensor, review_mask: np.ndarray,
                 q_final: Tensor, w_fuse: Tensor):
    """Weight review summaries by bilinear relevance to the question.

    Returns (gates (R,), fused (2h,)). Gates sum to one over real
    reviews and are exactly zero on filler rows.
    """
    target = ag.matmul(w_fuse, q_final)            # (2h,)
    raw = ag.matmul(summaries, target)             # (R,)
    gates = ag.softmax(raw, mask=review_mask)
    fused = ag.matmul(gates, summaries)
    return gates, fused


class QuestionEncoder:
    def __init__(self, embedding: Embedding, bilstm: BiLSTM):
        self.embedding = embedding
        self.bilstm = bilstm

    def __call__(self, ids: np.ndarray, mask: Optional[np.ndarray] = None) -> EncodedQuestion:
        ids = np.asarray(ids, dtype=np.int64)
        if mask is None:
            mask = np.ones(len(ids), dtype=bool)
        states, final = self.bilstm.encode(self.embedding(ids), mask)
        return EncodedQuestion(states=states, final=final, mask=np.asarray(mask, bool))


class ReviewReader:
    """Encodes every review and fuses them against the question."""

    def __init__(self, embedding: Embedding, bilstm: BiLSTM,
                 w_question: Tensor, w_review: Tensor, score_v: Tensor,
                 w_fuse: Tensor):
        self.embedding = embedding
        self.bilstm = bilstm
        self.w_question = w_question
        self.w_review = w_review
        self.score_v = score_v
        self.w_fuse = w_fuse

    def __call__(self, reviews: Sequence[np.ndarray], question: EncodedQuestion,
                 token_masks: Optional[Sequence[np.ndarray]] = None,
                 review_mask: Optional[np.ndarray] = None) -> EncodedReviews:
        if len(reviews) == 0:
            raise ContractError("review reader needs at least one review")
        if token_masks is None:
            token_masks = [np.ones(len(r), dtype=bool) for r in reviews]
        if review_mask is None:
            review_mask = np.array([m.any() for m in token_masks], dtype=bool)
        review_mask = np.asarray(review_mask, dtype=bool)
        if not review_mask.any():
            raise MaskError("review reader: every review is masked out")

        two_h = 2 * self.bilstm.forward.hidden
        word_states, word_masks, word_attn, summaries = [], [], [], []
        for ids, tok_mask in zip(reviews, token_masks):
            tok_mask = np.asarray(tok_mask, dtype=bool)
            if not tok_mask.any():
                # Filler review row: never encoded, carries no attention
                # mass, and the fusion gate pins its weight to zero.
                states = ag.zeros((len(ids), two_h))
                alpha = ag.zeros((len(ids),))
                pooled = ag.zeros((two_h,))
            else:
                states, _ = self.bilstm.encode(self.embedding(ids), tok_mask)
                alpha, pooled = review_word_attention(
                    question.states, question.mask, states, tok_mask,
                    self.w_question, self.w_review, self.score_v)
            word_states.append(states)
            word_masks.append(tok_mask)
            word_attn.append(alpha)
            summaries.append(pooled)

        summary_stack = ag.stack(summaries)
        gates, fused = gated_fusion(summary_stack, review_mask,
                                    question.final, self.w_fuse)
        return EncodedReviews(
            word_states=word_states, word_masks=word_masks,
            word_attention=word_attn, summaries=summary_stack,
            review_mask=review_mask, gates=gates, fused=fused)
