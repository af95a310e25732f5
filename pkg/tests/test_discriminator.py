"""Critic behavior: streams, pooling, penalty accounting, objectives."""

import numpy as np
import pytest

from paag import autograd as ag
from paag import discriminator
from paag.autograd import Tensor
from paag.discriminator import (ConvCritic, ReferenceEncoder,
                                generator_adversarial_term,
                                vanilla_critic_loss, wasserstein_critic_loss)
from paag.encoders import Embedding, LSTMCell
from paag.errors import ContractError

from conftest import assert_matches_fd, leaf


DIM = 4          # state dimension fed to the critic
MEM = 3          # attribute readout width


def toy_critic(rng, widths=(1, 2), filters=2, proj=3):
    conv_w = {w: leaf(rng, w * DIM, filters) for w in widths}
    conv_b = {w: leaf(rng, filters) for w in widths}
    return ConvCritic(
        conv_weights=conv_w, conv_biases=conv_b,
        project_features=leaf(rng, len(widths) * filters, proj),
        project_memory=leaf(rng, MEM, proj),
        project_reviews=leaf(rng, DIM, proj),
        w_head=leaf(rng, proj), b_head=leaf(rng))


def toy_rows(rng, T):
    return [leaf(rng, DIM) for _ in range(T)]


def critic_tensors(critic):
    ts = list(critic.conv_weights.values()) + list(critic.conv_biases.values())
    ts += [critic.project_features, critic.project_memory,
           critic.project_reviews, critic.w_head, critic.b_head]
    return ts


def numpy_score(critic, states, mem, rev):
    pooled = []
    for width in critic.widths:
        T = states.shape[0]
        if T < width:
            padded = np.concatenate(
                [states, np.zeros((width - T, states.shape[1]))], axis=0)
            windows = padded.reshape(1, width * states.shape[1])
        else:
            windows = np.stack([states[i:i + width].reshape(-1)
                                for i in range(T - width + 1)])
        feats = np.maximum(windows @ critic.conv_weights[width].data
                           + critic.conv_biases[width].data, 0.0)
        pooled.append(feats.max(axis=0))
    feats = np.concatenate(pooled)
    merged = np.maximum(
        feats @ critic.project_features.data
        + mem @ critic.project_memory.data
        + rev @ critic.project_reviews.data, 0.0)
    return float(merged @ critic.w_head.data + critic.b_head.data)


# -- reference answer stream ------------------------------------------------


def test_reference_encoder_zero_weights_emits_bridge_bias(rng):
    V, E, H = 9, 3, DIM
    emb = Embedding(leaf(rng, V, E))
    cell = LSTMCell(Tensor(np.zeros((E + H, 4 * H)), requires_grad=True),
                    Tensor(np.zeros((4 * H,)), requires_grad=True))
    bias = rng.standard_normal(H)
    enc = ReferenceEncoder(emb, cell,
                           Tensor(np.zeros((H, H)), requires_grad=True),
                           Tensor(bias.copy(), requires_grad=True))
    states = enc(np.array([4, 7, 2]))
    assert len(states) == 3
    for s in states:
        np.testing.assert_allclose(s.data, bias, atol=1e-12)


def test_reference_encoder_rejects_empty(rng):
    emb = Embedding(leaf(rng, 9, 3))
    cell = LSTMCell(leaf(rng, 3 + DIM, 4 * DIM), leaf(rng, 4 * DIM))
    enc = ReferenceEncoder(emb, cell, leaf(rng, DIM, DIM), leaf(rng, DIM))
    with pytest.raises(ContractError):
        enc(np.array([], dtype=np.int64))


# -- pooled convolution features --------------------------------------------


def test_score_matches_numpy_oracle(rng):
    critic = toy_critic(rng)
    for T in (1, 2, 5):
        states = rng.standard_normal((T, DIM))
        mem = rng.standard_normal(MEM)
        rev = rng.standard_normal(DIM)
        got = critic.score(Tensor(states), Tensor(mem), Tensor(rev)).item()
        assert got == pytest.approx(numpy_score(critic, states, mem, rev),
                                    abs=1e-12)


def test_pooled_features_shape(rng):
    critic = toy_critic(rng, widths=(1, 2, 3), filters=2)
    feats = critic.pooled_features(Tensor(rng.standard_normal((4, DIM))))
    assert feats.shape == (6,)


def test_pooled_short_sequence_pads_to_one_window(rng):
    critic = toy_critic(rng, widths=(3,), filters=2)
    row = rng.standard_normal((1, DIM))
    padded = np.concatenate([row, np.zeros((2, DIM))], axis=0)
    window = padded.reshape(1, 3 * DIM)
    want = np.maximum(window @ critic.conv_weights[3].data
                      + critic.conv_biases[3].data, 0.0)[0]
    got = critic.pooled_features(Tensor(row))
    np.testing.assert_allclose(got.data, want, atol=1e-12)


def test_pooled_rejects_non_matrix_states(rng):
    critic = toy_critic(rng)
    with pytest.raises(ContractError):
        critic.pooled_features(Tensor(rng.standard_normal(DIM)))


def test_width_one_pooling_ignores_row_order_and_copies(rng):
    critic = toy_critic(rng, widths=(1,), filters=3)
    states = rng.standard_normal((4, DIM))
    base = critic.pooled_features(Tensor(states)).data
    shuffled = critic.pooled_features(Tensor(states[::-1].copy())).data
    np.testing.assert_allclose(shuffled, base, atol=1e-12)
    doubled = np.concatenate([states, states[2:3]], axis=0)
    np.testing.assert_allclose(critic.pooled_features(Tensor(doubled)).data,
                               base, atol=1e-12)


# -- wasserstein objective --------------------------------------------------


def test_loss_is_score_gap_plus_weighted_penalty(rng):
    critic = toy_critic(rng)
    real, fake, nof = toy_rows(rng, 3), toy_rows(rng, 3), toy_rows(rng, 3)
    mem, rev = leaf(rng, MEM), leaf(rng, DIM)
    lam = 7.0
    loss, diag = wasserstein_critic_loss(
        critic, real, fake, nof, mem, rev, epsilon=0.4, gp_lambda=lam)
    want = (diag.score_no_facts + diag.score_fake - diag.score_real
            + lam * diag.penalty)
    assert loss.item() == pytest.approx(want, abs=1e-10)


def test_lambda_zero_drops_penalty_from_loss(rng):
    critic = toy_critic(rng)
    real, fake, nof = toy_rows(rng, 3), toy_rows(rng, 3), toy_rows(rng, 3)
    mem, rev = leaf(rng, MEM), leaf(rng, DIM)
    loss, diag = wasserstein_critic_loss(
        critic, real, fake, nof, mem, rev, epsilon=0.5, gp_lambda=0.0)
    want = diag.score_no_facts + diag.score_fake - diag.score_real
    assert loss.item() == pytest.approx(want, abs=1e-12)
    # Norms stay reported for monitoring even when unweighted.
    assert len(diag.interpolate_norms) == 1
    ag.backward(loss)
    assert critic.w_head.grad is not None
    assert np.all(np.isfinite(critic.w_head.grad))


def endpoint_norm(critic, rows, mem, rev):
    m = Tensor(np.stack([r.data for r in rows]), requires_grad=True)
    score = critic.score(m, mem.detach(), rev.detach())
    (g,) = ag.grad(score, [m])
    return float(np.sqrt((g.data ** 2).sum() + discriminator.NORM_GUARD))


def test_epsilon_endpoints_interpolate_at_the_streams(rng):
    critic = toy_critic(rng)
    real, fake, nof = toy_rows(rng, 3), toy_rows(rng, 3), toy_rows(rng, 3)
    mem, rev = leaf(rng, MEM), leaf(rng, DIM)
    _, at_fake = wasserstein_critic_loss(
        critic, real, fake, nof, mem, rev, epsilon=1.0, gp_lambda=1.0)
    _, at_real = wasserstein_critic_loss(
        critic, real, fake, nof, mem, rev, epsilon=0.0, gp_lambda=1.0)
    assert at_fake.interpolate_norms[0] == pytest.approx(
        endpoint_norm(critic, fake, mem, rev), abs=1e-10)
    assert at_real.interpolate_norms[0] == pytest.approx(
        endpoint_norm(critic, real, mem, rev), abs=1e-10)


def test_unit_slope_critic_pays_no_penalty(rng):
    # Score built to be x . w on the strongest timestep with ||w|| = 1,
    # so the interpolate gradient norm is exactly 1.
    direction = rng.standard_normal(DIM)
    direction /= np.linalg.norm(direction)
    critic = ConvCritic(
        conv_weights={1: Tensor(direction.reshape(DIM, 1), requires_grad=True)},
        conv_biases={1: Tensor(np.asarray([10.0]), requires_grad=True)},
        project_features=Tensor(np.ones((1, 1)), requires_grad=True),
        project_memory=Tensor(np.zeros((MEM, 1)), requires_grad=True),
        project_reviews=Tensor(np.zeros((DIM, 1)), requires_grad=True),
        w_head=Tensor(np.ones(1), requires_grad=True),
        b_head=Tensor(0.0, requires_grad=True))
    real, fake, nof = toy_rows(rng, 4), toy_rows(rng, 4), toy_rows(rng, 4)
    mem, rev = leaf(rng, MEM), leaf(rng, DIM)
    _, diag = wasserstein_critic_loss(
        critic, real, fake, nof, mem, rev, epsilon=0.3, gp_lambda=10.0)
    assert diag.interpolate_norms[0] == pytest.approx(1.0, abs=1e-9)
    assert diag.penalty < 1e-18


def test_per_step_scoring_reports_one_norm_per_timestep(rng):
    critic = toy_critic(rng)
    real, fake, nof = toy_rows(rng, 3), toy_rows(rng, 3), toy_rows(rng, 3)
    mem, rev = leaf(rng, MEM), leaf(rng, DIM)
    _, seq = wasserstein_critic_loss(
        critic, real, fake, nof, mem, rev, epsilon=0.6, gp_lambda=1.0)
    _, stepped = wasserstein_critic_loss(
        critic, real, fake, nof, mem, rev, epsilon=0.6, gp_lambda=1.0,
        per_step=True)
    assert len(seq.interpolate_norms) == 1
    assert len(stepped.interpolate_norms) == 3
    assert all(n >= 0.0 for n in stepped.interpolate_norms)


def test_penalty_gradients_match_finite_differences(rng):
    critic = toy_critic(rng, widths=(1, 2), filters=2, proj=2)
    real, fake, nof = toy_rows(rng, 3), toy_rows(rng, 3), toy_rows(rng, 3)
    mem, rev = leaf(rng, MEM), leaf(rng, DIM)

    def loss_fn():
        loss, _ = wasserstein_critic_loss(
            critic, real, fake, nof, mem, rev, epsilon=0.37, gp_lambda=5.0)
        return loss

    assert_matches_fd(loss_fn,
                      [critic.conv_weights[1], critic.project_features,
                       critic.w_head, real[0], fake[1]],
                      tol=1e-6)


def test_stream_length_mismatch_rejected(rng):
    critic = toy_critic(rng)
    mem, rev = leaf(rng, MEM), leaf(rng, DIM)
    with pytest.raises(ContractError, match="stream lengths differ"):
        wasserstein_critic_loss(critic, toy_rows(rng, 3), toy_rows(rng, 2),
                                toy_rows(rng, 3), mem, rev, 0.5, 1.0)


def test_epsilon_outside_unit_interval_rejected(rng):
    critic = toy_critic(rng)
    rows = toy_rows(rng, 2)
    mem, rev = leaf(rng, MEM), leaf(rng, DIM)
    with pytest.raises(ContractError, match="epsilon"):
        wasserstein_critic_loss(critic, rows, rows, rows, mem, rev, 1.5, 1.0)


def test_empty_streams_rejected(rng):
    critic = toy_critic(rng)
    mem, rev = leaf(rng, MEM), leaf(rng, DIM)
    with pytest.raises(ContractError, match="empty"):
        wasserstein_critic_loss(critic, [], [], [], mem, rev, 0.5, 1.0)


# -- vanilla objective ------------------------------------------------------


def zero_output_critic():
    return ConvCritic(
        conv_weights={1: Tensor(np.zeros((DIM, 1)), requires_grad=True)},
        conv_biases={1: Tensor(np.zeros(1), requires_grad=True)},
        project_features=Tensor(np.zeros((1, 1)), requires_grad=True),
        project_memory=Tensor(np.zeros((MEM, 1)), requires_grad=True),
        project_reviews=Tensor(np.zeros((DIM, 1)), requires_grad=True),
        w_head=Tensor(np.zeros(1), requires_grad=True),
        b_head=Tensor(0.0, requires_grad=True))


def test_vanilla_loss_at_zero_scores_is_two_log_two(rng):
    critic = zero_output_critic()
    rows = toy_rows(rng, 3)
    loss, diag = vanilla_critic_loss(critic, rows, rows,
                                     leaf(rng, MEM), leaf(rng, DIM))
    assert loss.item() == pytest.approx(2.0 * np.log(2.0), abs=1e-12)
    assert diag.score_real == pytest.approx(0.0, abs=1e-12)


def test_vanilla_loss_vanishes_when_confidently_separated(rng):
    # First coordinate drives the score: real rows sit at +80, fake at
    # -80, the head bias recenters to +-40.
    critic = ConvCritic(
        conv_weights={1: Tensor(np.eye(DIM, 1), requires_grad=True)},
        conv_biases={1: Tensor(np.zeros(1), requires_grad=True)},
        project_features=Tensor(np.ones((1, 1)), requires_grad=True),
        project_memory=Tensor(np.zeros((MEM, 1)), requires_grad=True),
        project_reviews=Tensor(np.zeros((DIM, 1)), requires_grad=True),
        w_head=Tensor(np.ones(1), requires_grad=True),
        b_head=Tensor(-40.0, requires_grad=True))
    real = [Tensor(np.array([80.0, 0.0, 0.0, 0.0])) for _ in range(2)]
    fake = [Tensor(np.array([-80.0, 0.0, 0.0, 0.0])) for _ in range(2)]
    loss, diag = vanilla_critic_loss(critic, real, fake,
                                     leaf(rng, MEM), leaf(rng, DIM))
    assert diag.score_real == pytest.approx(40.0)
    assert diag.score_fake == pytest.approx(-40.0)
    assert loss.item() < 1e-8


def test_vanilla_length_mismatch_rejected(rng):
    critic = toy_critic(rng)
    with pytest.raises(ContractError, match="stream lengths differ"):
        vanilla_critic_loss(critic, toy_rows(rng, 2), toy_rows(rng, 3),
                            leaf(rng, MEM), leaf(rng, DIM))


# -- generator-side terms ---------------------------------------------------


def test_generator_term_forms(rng):
    critic = toy_critic(rng)
    fake = toy_rows(rng, 3)
    mem, rev = leaf(rng, MEM), leaf(rng, DIM)
    score = critic.score(ag.stack(fake), mem, rev).item()
    w = generator_adversarial_term(critic, fake, mem, rev, "wasserstein")
    m = generator_adversarial_term(critic, fake, mem, rev, "minimax")
    n = generator_adversarial_term(critic, fake, mem, rev, "nonsaturating")
    sig = 1.0 / (1.0 + np.exp(score))
    assert w.item() == pytest.approx(-score, abs=1e-12)
    assert m.item() == pytest.approx(np.log(sig), abs=1e-10)
    assert n.item() == pytest.approx(-np.log(1.0 - sig), abs=1e-10)
    with pytest.raises(ContractError, match="objective"):
        generator_adversarial_term(critic, fake, mem, rev, "gan")


def test_minimax_gradient_dies_when_critic_rejects_fakes(rng):
    # Score is x[0] + 60 - 100 = x[0] - 40 on the strongest row, so a
    # fake row near the origin scores about -40. The saturating form's
    # slope through the fake states collapses there; the wasserstein
    # form keeps a unit-scale slope.
    critic = ConvCritic(
        conv_weights={1: Tensor(np.eye(DIM, 1), requires_grad=True)},
        conv_biases={1: Tensor(np.asarray([60.0]), requires_grad=True)},
        project_features=Tensor(np.ones((1, 1)), requires_grad=True),
        project_memory=Tensor(np.zeros((MEM, 1)), requires_grad=True),
        project_reviews=Tensor(np.zeros((DIM, 1)), requires_grad=True),
        w_head=Tensor(np.ones(1), requires_grad=True),
        b_head=Tensor(-100.0, requires_grad=True))
    mem, rev = leaf(rng, MEM), leaf(rng, DIM)

    def fake_grad_norm(objective):
        fake = [Tensor(0.1 * rng.standard_normal(DIM), requires_grad=True)
                for _ in range(3)]
        term = generator_adversarial_term(critic, fake, mem, rev, objective)
        ag.backward(term, params=fake)
        return float(np.sqrt(sum((r.grad ** 2).sum() for r in fake)))

    assert fake_grad_norm("minimax") < 1e-12
    assert fake_grad_norm("wasserstein") == pytest.approx(1.0, abs=1e-9)
    assert fake_grad_norm("nonsaturating") == pytest.approx(1.0, abs=1e-6)
