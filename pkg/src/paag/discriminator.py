"""Consistency critic over decoder output states.

Three streams share one scoring network: output states from the real
decoding (facts attached), output states from a facts-free decoding,
and states derived from the reference answer through a separate
unidirectional LSTM plus a linear bridge into the same space. The
scorer runs width-{1,2,3} convolutions over time, max-pools each filter
bank, folds in projections of the attribute readout and the fused
review summary, and emits a scalar.

Training objective (per example):

    score(no_facts) + score(fake) - score(real)
      + lambda * mean_t (||d score(interp) / d interp_t|| - 1)^2

with the interpolate drawn once per sequence between the fake and real
state sequences. The gradient norm term is differentiated again when
the loss is backpropagated, which the autodiff core supports directly.
A vanilla (sigmoid cross-entropy) objective is kept for the ablation
that demonstrates why the Wasserstein form is preferable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from paag import autograd as ag
from paag.autograd import Tensor
from paag.encoders import Embedding, LSTMCell
from paag.errors import ContractError

# Added under the squared row norms of the penalty gradient; without it
# the norm has no derivative at zero, which max pooling can reach.
NORM_GUARD = 1e-12


@dataclass
class CriticDiagnostics:
    score_real: float
    score_fake: float
    score_no_facts: float
    penalty: float
    interpolate_norms: List[float]


class ReferenceEncoder:
    """Reads the reference answer into the decoder-state space."""

    def __init__(self, embedding: Embedding, cell: LSTMCell,
                 w_bridge: Tensor, b_bridge: Tensor):
        self.embedding = embedding
        self.cell = cell
        self.w_bridge = w_bridge
        self.b_bridge = b_bridge

    def __call__(self, answer_ids: np.ndarray) -> List[Tensor]:
        answer_ids = np.asarray(answer_ids, dtype=np.int64)
        if answer_ids.size == 0:
            raise ContractError("reference encoder needs a non-empty answer")
        h = ag.zeros((self.cell.hidden,))
        c = ag.zeros((self.cell.hidden,))
        states = []
        for token in answer_ids:
            emb = self.embedding(np.array(int(token), dtype=np.int64))
            h, c = self.cell.step(emb, h, c)
            states.append(ag.add(ag.matmul(h, self.w_bridge), self.b_bridge))
        return states


class ConvCritic:
    """Max-pooled text convolutions plus fact injection, scalar output."""

    def __init__(self, conv_weights: Dict[int, Tensor], conv_biases: Dict[int, Tensor],
                 project_features: Tensor, project_memory: Tensor,
                 project_reviews: Tensor, w_head: Tensor, b_head: Tensor):
        self.widths = sorted(conv_weights)
        self.conv_weights = conv_weights
        self.conv_biases = conv_biases
        self.project_features = project_features
        self.project_memory = project_memory
        self.project_reviews = project_reviews
        self.w_head = w_head
        self.b_head = b_head

    def pooled_features(self, states: Tensor) -> Tensor:
        """Convolve over time and max-pool each filter; (widths * F,).

        Only windows fully inside the given states participate, so
        appending zero rows beyond the real sequence cannot change the
        result. A sequence shorter than a kernel is zero-padded up to
        that one window.
        """
        if states.ndim != 2:
            raise ContractError(f"critic expects (T, D) states, got {states.shape}")
        T, dim = states.shape
        pooled = []
        for width in self.widths:
            if T < width:
                pad = ag.zeros((width - T, dim))
                windows = ag.reshape(ag.concat([states, pad], axis=0), (1, width * dim))
            else:
                cols = [ag.narrow(states, 0, off, T - width + 1) for off in range(width)]
                windows = ag.concat(cols, axis=1)
            feats = ag.relu(ag.add(ag.matmul(windows, self.conv_weights[width]),
                                   self.conv_biases[width]))
            pooled.append(ag.max_(feats, axis=0))
        return ag.concat(pooled)

    def score(self, states: Tensor, memory_vector: Tensor,
              review_summary: Tensor) -> Tensor:
        feats = self.pooled_features(states)
        merged = ag.relu(ag.add(
            ag.add(ag.matmul(feats, self.project_features),
                   ag.matmul(memory_vector, self.project_memory)),
            ag.matmul(review_summary, self.project_reviews)))
        return ag.add(ag.matmul(merged, self.w_head), self.b_head)


def _stack_states(states: Sequence[Tensor]) -> Tensor:
    if not states:
        raise ContractError("critic received an empty state sequence")
    return ag.stack(list(states))


def wasserstein_critic_loss(critic: ConvCritic,
                            real: Sequence[Tensor],
                            fake: Sequence[Tensor],
                            no_facts: Sequence[Tensor],
                            memory_vector: Tensor,
                            review_summary: Tensor,
                            epsilon: float,
                            gp_lambda: float,
                            per_step: bool = False) -> Tuple[Tensor, CriticDiagnostics]:
    """Critic objective for one example; lower is better for the critic.

    ``epsilon`` is the per-sequence interpolation draw in [0, 1]. With
    ``per_step`` the critic scores each timestep on its own and the
    terms average over time instead of scoring whole sequences.
    """
    if not (len(real) == len(fake) == len(no_facts)):
        raise ContractError(
            f"stream lengths differ: real {len(real)}, fake {len(fake)}, "
            f"no_facts {len(no_facts)}")
    if not (0.0 <= epsilon <= 1.0):
        raise ContractError(f"epsilon must lie in [0, 1], got {epsilon}")

    real_m = _stack_states(real)
    fake_m = _stack_states(fake)
    nof_m = _stack_states(no_facts)

    interp_data = epsilon * fake_m.data + (1.0 - epsilon) * real_m.data
    interp = Tensor(interp_data, requires_grad=True)

    if per_step:
        T = real_m.shape[0]
        s_real = [critic.score(real_m[t:t + 1], memory_vector, review_summary)
                  for t in range(T)]
        s_fake = [critic.score(fake_m[t:t + 1], memory_vector, review_summary)
                  for t in range(T)]
        s_nof = [critic.score(nof_m[t:t + 1], memory_vector, review_summary)
                 for t in range(T)]
        score_real = ag.mean_(ag.stack(s_real))
        score_fake = ag.mean_(ag.stack(s_fake))
        score_nof = ag.mean_(ag.stack(s_nof))
        interp_scores = [critic.score(interp[t:t + 1], memory_vector.detach(),
                                      review_summary.detach()) for t in range(T)]
        interp_score = ag.sum_(ag.stack(interp_scores))
    else:
        score_real = critic.score(real_m, memory_vector, review_summary)
        score_fake = critic.score(fake_m, memory_vector, review_summary)
        score_nof = critic.score(nof_m, memory_vector, review_summary)
        interp_score = critic.score(interp, memory_vector.detach(),
                                    review_summary.detach())

    # With gp_lambda == 0 the norms are diagnostic only, so the second
    # differentiation graph is not built. The guard keeps the norm
    # differentiable when pooling routes no gradient to a timestep.
    (interp_grad,) = ag.grad(interp_score, [interp], create_graph=gp_lambda > 0.0)
    one = Tensor(1.0)
    if per_step:
        # Each timestep is scored on its own, so each row of the
        # gradient belongs to its own interpolation point; the penalty
        # averages over them.
        row_norms = ag.sqrt(ag.add(
            ag.sum_(ag.mul(interp_grad, interp_grad), axis=1),
            Tensor(NORM_GUARD)))
        deviation = ag.sub(row_norms, one)
        penalty = ag.mean_(ag.mul(deviation, deviation))
        norms_out = [float(x) for x in row_norms.data]
    else:
        # Whole-sequence scoring treats the interpolate as one sample,
        # so the constraint is on the full gradient norm. A per-row
        # version would be unsatisfiable: max pooling leaves rows with
        # no gradient at all, pinning their norms at zero.
        full_norm = ag.sqrt(ag.add(
            ag.sum_(ag.mul(interp_grad, interp_grad)), Tensor(NORM_GUARD)))
        deviation = ag.sub(full_norm, one)
        penalty = ag.mul(deviation, deviation)
        norms_out = [full_norm.item()]

    loss = ag.add(
        ag.add(score_nof, ag.sub(score_fake, score_real)),
        ag.mul(Tensor(gp_lambda), penalty))
    diag = CriticDiagnostics(
        score_real=score_real.item(), score_fake=score_fake.item(),
        score_no_facts=score_nof.item(), penalty=penalty.item(),
        interpolate_norms=norms_out)
    return loss, diag


def vanilla_critic_loss(critic: ConvCritic,
                        real: Sequence[Tensor],
                        fake: Sequence[Tensor],
                        memory_vector: Tensor,
                        review_summary: Tensor) -> Tuple[Tensor, CriticDiagnostics]:
    """Sigmoid cross-entropy critic: real labeled 1, fake labeled 0.

    With the critic stuck at zero output the loss per pair is exactly
    2 ln 2; with confidently separated scores it vanishes.
    """
    if len(real) != len(fake):
        raise ContractError(
            f"stream lengths differ: real {len(real)}, fake {len(fake)}")
    s_real = critic.score(_stack_states(real), memory_vector, review_summary)
    s_fake = critic.score(_stack_states(fake), memory_vector, review_summary)
    loss = ag.add(ag.neg(ag.log(ag.sigmoid(s_real))),
                  ag.neg(ag.log(ag.sigmoid(ag.neg(s_fake)))))
    diag = CriticDiagnostics(
        score_real=s_real.item(), score_fake=s_fake.item(),
        score_no_facts=float("nan"), penalty=0.0, interpolate_norms=[])
    return loss, diag


def generator_adversarial_term(critic: ConvCritic,
                               fake: Sequence[Tensor],
                               memory_vector: Tensor,
                               review_summary: Tensor,
                               objective: str = "wasserstein") -> Tensor:
    """Adversarial addition to the generator loss (to be minimised).

    ``wasserstein`` uses the raw negated score. ``minimax`` is the
    classic saturating form log(1 - sigmoid(score)): once the critic
    confidently rejects fakes, its slope collapses, which is exactly
    the failure mode the Wasserstein objective avoids.
    ``nonsaturating`` is the common -log sigmoid(score) alternative.
    """
    score = critic.score(_stack_states(fake), memory_vector, review_summary)
    if objective == "wasserstein":
        return ag.neg(score)
    if objective == "minimax":
        return ag.log(ag.sigmoid(ag.neg(score)))
    if objective == "nonsaturating":
        return ag.neg(ag.log(ag.sigmoid(score)))
    raise ContractError(f"unknown adversarial objective {objective!r}")
