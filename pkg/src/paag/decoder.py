"""Answer decoder with dual attention and a copy pointer.

The decoder LSTM starts from a projection of the attribute readout, the
question's final state and the fused review summary. Each step attends
separately over question states and review representations (review
summaries by default, individual review words on request), balances the
two context vectors with a learned scalar gate, and emits a vocabulary
distribution. A copy gate mixes that distribution with the question
attention scattered onto copy-extended token ids, so out-of-vocabulary
question words remain generable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from paag import autograd as ag
from paag.autograd import Tensor
from paag.data import EOS, SOS, QAExample
from paag.encoders import Embedding, EncodedQuestion, EncodedReviews, LSTMCell
from paag.errors import ContractError


@dataclass
class DecodeContext:
    """Everything one example exposes to the decoder."""

    question: EncodedQuestion
    reviews: EncodedReviews
    memory_vector: Tensor          # (E,)
    question_ids: np.ndarray       # (Tq,) ids with copy-extended entries
    n_oov: int
    attend_review_words: bool = False

    def review_states(self) -> Tuple[Tensor, np.ndarray]:
        """Attention targets on the review side, with their mask."""
        if not self.attend_review_words:
            return self.reviews.summaries, self.reviews.review_mask
        states = ag.concat(self.reviews.word_states, axis=0)
        mask = np.concatenate([
            m if keep else np.zeros_like(m)
            for m, keep in zip(self.reviews.word_masks, self.reviews.review_mask)
        ])
        return states, mask


@dataclass
class DecoderState:
    hidden: Tensor        # (2h,)
    cell: Tensor          # (2h,)
    context: Tensor       # (4h,) previous balanced context, zeros at t=0
    step: int = 0


@dataclass
class StepOutput:
    vocab_dist: Tensor             # (V,)
    copy_dist: Tensor              # (Tq,) question attention reused as pointer
    mixed: Tensor                  # (V + n_oov,)
    p_gen: Tensor                  # () copy gate complement
    gate: Tensor                   # () review/question balance
    question_attention: Tensor     # (Tq,)
    review_attention: Tensor       # (R,) or (sum Tj,) under word-level attention
    state_vector: Tensor           # (2h,) pre-vocabulary output state


@dataclass
class StepRecord:
    """JSON-friendly snapshot of one emitted step."""

    token: int
    log_prob: float
    gate: float
    p_gen: float
    question_attention: List[float]
    review_attention: List[float]
    copy_dist: List[float]


@dataclass
class GenerationTrace:
    tokens: List[int]
    log_prob: float
    normalized_score: float
    steps: List[StepRecord] = field(default_factory=list)


@dataclass
class TeacherForcedRun:
    loss: Tensor                   # () mean negative log likelihood per token
    states: List[Tensor]           # per step (2h,) output states
    outputs: List[StepOutput]


def _attend(states: Tensor, mask: np.ndarray, query: Tensor,
            w_source: Tensor, w_state: Tensor, score_v: Tensor):
    scores = ag.matmul(ag.tanh(ag.add(ag.matmul(states, w_source),
                                      ag.matmul(query, w_state))), score_v)
    weights = ag.softmax(scores, mask=mask)
    context = ag.matmul(weights, states)
    return weights, context


class AnswerDecoder:
    def __init__(self, embedding: Embedding, cell: LSTMCell,
                 w_init: Tensor, b_init: Tensor,
                 w_attn_question: Tensor, v_attn_question: Tensor,
                 w_attn_review: Tensor, v_attn_review: Tensor,
                 w_attn_state: Tensor,
                 w_gate: Tensor, b_gate: Tensor,
                 w_out: Tensor, b_out: Tensor,
                 w_vocab: Tensor, b_vocab: Tensor,
                 w_copy: Tensor, b_copy: Tensor):
        self.embedding = embedding
        self.cell = cell
        self.w_init, self.b_init = w_init, b_init
        self.w_attn_question, self.v_attn_question = w_attn_question, v_attn_question
        self.w_attn_review, self.v_attn_review = w_attn_review, v_attn_review
        self.w_attn_state = w_attn_state
        self.w_gate, self.b_gate = w_gate, b_gate
        self.w_out, self.b_out = w_out, b_out
        self.w_vocab, self.b_vocab = w_vocab, b_vocab
        self.w_copy, self.b_copy = w_copy, b_copy
        self.state_dim = cell.hidden

    # -- state ----------------------------------------------------------

    def init_state(self, ctx: DecodeContext) -> DecoderState:
        packed = ag.concat([ctx.memory_vector, ctx.question.final, ctx.reviews.fused])
        hidden = ag.add(ag.matmul(packed, self.w_init), self.b_init)
        return DecoderState(
            hidden=hidden,
            cell=ag.zeros((self.state_dim,)),
            context=ag.zeros((2 * self.state_dim,)),
            step=0,
        )

    def _advance(self, ctx: DecodeContext, state: DecoderState, prev_id: int):
        prev_emb = self.embedding(np.array(prev_id, dtype=np.int64))
        x = ag.concat([state.context, prev_emb])
        hidden, cell = self.cell.step(x, state.hidden, state.cell)
        return hidden, cell, prev_emb

    def step(self, ctx: DecodeContext, state: DecoderState,
             prev_id: int) -> Tuple[StepOutput, DecoderState]:
        hidden, cell, prev_emb = self._advance(ctx, state, prev_id)

        q_weights, q_context = _attend(
            ctx.question.states, ctx.question.mask, hidden,
            self.w_attn_question, self.w_attn_state, self.v_attn_question)
        r_states, r_mask = ctx.review_states()
        r_weights, r_context = _attend(
            r_states, r_mask, hidden,
            self.w_attn_review, self.w_attn_state, self.v_attn_review)

        gate = ag.sigmoid(ag.add(ag.matmul(hidden, self.w_gate), self.b_gate))
        context = ag.concat([ag.mul(gate, r_context),
                             ag.mul(ag.sub(Tensor(1.0), gate), q_context)])

        out_state = ag.add(ag.matmul(ag.concat([hidden, context]), self.w_out),
                           self.b_out)
        vocab_dist = ag.softmax(ag.add(ag.matmul(out_state, self.w_vocab),
                                       self.b_vocab))

        p_gen = ag.sigmoid(ag.add(
            ag.matmul(ag.concat([hidden, context, prev_emb]), self.w_copy),
            self.b_copy))
        mixed = self._mix(ctx, vocab_dist, q_weights, p_gen)

        output = StepOutput(
            vocab_dist=vocab_dist, copy_dist=q_weights, mixed=mixed,
            p_gen=p_gen, gate=gate, question_attention=q_weights,
            review_attention=r_weights, state_vector=out_state)
        new_state = DecoderState(hidden=hidden, cell=cell, context=context,
                                 step=state.step + 1)
        return output, new_state

    def _mix(self, ctx: DecodeContext, vocab_dist: Tensor,
             q_weights: Tensor, p_gen: Tensor) -> Tensor:
        vocab_size = self.embedding.vocab_size
        extended = vocab_size + ctx.n_oov
        generated = ag.mul(p_gen, vocab_dist)
        if ctx.n_oov:
            generated = ag.concat([generated, ag.zeros((ctx.n_oov,))])
        copied = ag.scatter_add(
            ag.mul(ag.sub(Tensor(1.0), p_gen), q_weights),
            ctx.question_ids, extended)
        return ag.add(generated, copied)

    # -- teacher forcing ------------------------------------------------

    def teacher_forced(self, ctx: DecodeContext,
                       answer_ids: np.ndarray) -> TeacherForcedRun:
        answer_ids = np.asarray(answer_ids, dtype=np.int64)
        if answer_ids.size == 0:
            raise ContractError("teacher forcing needs a non-empty answer")
        state = self.init_state(ctx)
        prev = SOS
        step_losses, states, outputs = [], [], []
        for target in answer_ids:
            output, state = self.step(ctx, state, prev)
            prob = ag.take(output.mixed, np.array(int(target), dtype=np.int64))
            step_losses.append(ag.neg(ag.log(prob)))
            states.append(output.state_vector)
            outputs.append(output)
            prev = int(target)
        loss = ag.mean_(ag.stack(step_losses))
        return TeacherForcedRun(loss=loss, states=states, outputs=outputs)

    def states_without_facts(self, ctx: DecodeContext,
                             answer_ids: np.ndarray) -> List[Tensor]:
        """Teacher-forced output states with facts and contexts zeroed.

        The attribute readout and fused review summary are replaced by
        zeros in the initial projection and the balanced context is
        pinned to zero at every step, so the run reflects what the
        decoder would say with no product evidence attached.
        """
        answer_ids = np.asarray(answer_ids, dtype=np.int64)
        if answer_ids.size == 0:
            raise ContractError("teacher forcing needs a non-empty answer")
        e_dim = ctx.memory_vector.shape[0]
        packed = ag.concat([ag.zeros((e_dim,)), ctx.question.final,
                            ag.zeros(ctx.reviews.fused.shape)])
        hidden = ag.add(ag.matmul(packed, self.w_init), self.b_init)
        cell = ag.zeros((self.state_dim,))
        zero_context = ag.zeros((2 * self.state_dim,))
        prev = SOS
        states = []
        for target in answer_ids:
            prev_emb = self.embedding(np.array(prev, dtype=np.int64))
            x = ag.concat([zero_context, prev_emb])
            hidden, cell = self.cell.step(x, hidden, cell)
            out_state = ag.add(
                ag.matmul(ag.concat([hidden, zero_context]), self.w_out), self.b_out)
            states.append(out_state)
            prev = int(target)
        return states

    # -- search ---------------------------------------------------------

    def _record(self, output: StepOutput, token: int) -> StepRecord:
        with np.errstate(divide="ignore"):
            log_prob = float(np.log(output.mixed.data[token]))
        return StepRecord(
            token=int(token),
            log_prob=log_prob,
            gate=output.gate.item(),
            p_gen=output.p_gen.item(),
            question_attention=[float(x) for x in output.question_attention.data],
            review_attention=[float(x) for x in output.review_attention.data],
            copy_dist=[float(x) for x in output.copy_dist.data],
        )

    def greedy(self, ctx: DecodeContext, max_len: int) -> GenerationTrace:
        """Argmax decoding; numpy argmax resolves ties to the lowest id."""
        state = self.init_state(ctx)
        prev = SOS
        tokens: List[int] = []
        records: List[StepRecord] = []
        total = 0.0
        for _ in range(max_len):
            output, state = self.step(ctx, state, prev)
            token = int(np.argmax(output.mixed.data))
            total += float(np.log(output.mixed.data[token]))
            tokens.append(token)
            records.append(self._record(output, token))
            if token == EOS:
                break
            prev = token
        return GenerationTrace(
            tokens=tokens, log_prob=total,
            normalized_score=total / max(len(tokens), 1), steps=records)

    def beam(self, ctx: DecodeContext, width: int, max_len: int) -> GenerationTrace:
        """Length-normalized beam search.

        Hypotheses that emit the end marker retire to a finished pool;
        the winner maximises total log probability divided by length.
        Ties prefer the sequence with the smaller token ids, so width 1
        reproduces greedy decoding exactly.
        """
        if width < 1:
            raise ContractError(f"beam width must be positive, got {width}")
        start = self.init_state(ctx)
        # Each live hypothesis: (tokens, log prob, state, records)
        live = [([], 0.0, start, [])]
        finished: List[Tuple[List[int], float, List[StepRecord]]] = []
        for _ in range(max_len):
            if not live:
                break
            candidates = []
            for tokens, logp, state, records in live:
                prev = tokens[-1] if tokens else SOS
                output, new_state = self.step(ctx, state, prev)
                with np.errstate(divide="ignore"):
                    log_mix = np.log(output.mixed.data)
                for token in range(log_mix.shape[0]):
                    candidates.append((
                        logp + float(log_mix[token]), token, tokens,
                        new_state, records, output))
            candidates.sort(key=lambda c: (-c[0], c[2] + [c[1]]))
            next_live = []
            for logp, token, tokens, state, records, output in candidates[:width]:
                new_tokens = tokens + [token]
                new_records = records + [self._record(output, token)]
                if token == EOS:
                    finished.append((new_tokens, logp, new_records))
                else:
                    next_live.append((new_tokens, logp, state, new_records))
            live = next_live
        for tokens, logp, state, records in live:
            finished.append((tokens, logp, records))
        best = max(finished, key=lambda c: (c[1] / max(len(c[0]), 1),
                                            [-t for t in c[0]]))
        tokens, logp, records = best
        return GenerationTrace(
            tokens=tokens, log_prob=logp,
            normalized_score=logp / max(len(tokens), 1), steps=records)
