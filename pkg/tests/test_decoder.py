"""Dual-attention pointer decoder: gates, mixing, search."""

import numpy as np
import pytest

from paag import autograd as ag
from paag.autograd import Tensor
from paag.data import EOS, QAExample
from paag.errors import ContractError
from paag.gradcheck import toy_model
from paag.optim import AdagradState, zero_grads


def zero_param(model, name):
    t = model.params.tensors[name]
    t.data = np.zeros(t.shape)


def single_oov_example():
    # Question is one out-of-vocabulary word; the pointer alone can
    # reproduce the answer.
    return QAExample(
        question=np.array([12]),
        reviews=[np.array([7, 8])],
        attributes=np.array([[5, 7]]),
        answer=np.array([12]),
        oov_map={"oovword": 12},
    )


def test_init_state_reduces_to_bias_with_zero_weight():
    model, example = toy_model("RAGF")
    zero_param(model, "decoder.init.weight")
    enc = model.encode(example)
    state = model.decoder.init_state(enc.context)
    np.testing.assert_allclose(
        state.hidden.data, model.params.tensors["decoder.init.bias"].data,
        atol=1e-12)
    assert np.all(state.cell.data == 0) and np.all(state.context.data == 0)


def test_zero_gate_parameters_balance_contexts_evenly():
    model, example = toy_model("RAGF")
    zero_param(model, "decoder.gate.weight")
    zero_param(model, "decoder.gate.bias")
    enc = model.encode(example)
    output, _ = model.decoder.step(enc.context, model.decoder.init_state(enc.context), 2)
    np.testing.assert_allclose(output.gate.item(), 0.5, atol=1e-12)


def test_step_distributions_are_normalized():
    model, example = toy_model("RAGF")
    enc = model.encode(example)
    output, _ = model.decoder.step(enc.context, model.decoder.init_state(enc.context), 2)
    for dist in (output.vocab_dist, output.question_attention,
                 output.review_attention, output.mixed):
        assert abs(float(dist.data.sum()) - 1.0) < 1e-12
        assert np.all(dist.data >= 0)
    assert output.mixed.shape == (12 + example.n_oov,)


def test_generate_only_gate_reduces_mix_to_vocab():
    model, example = toy_model("RAGF")
    zero_param(model, "decoder.copy.weight")
    t = model.params.tensors["decoder.copy.bias"]
    t.data = np.asarray(40.0)  # p_gen == 1 up to 4e-18
    enc = model.encode(example)
    output, _ = model.decoder.step(enc.context, model.decoder.init_state(enc.context), 2)
    np.testing.assert_allclose(output.mixed.data[:12], output.vocab_dist.data,
                               atol=1e-12)
    assert np.all(output.mixed.data[12:] < 1e-12)


def test_copy_only_gate_reproduces_pointer_one_hot():
    model, _ = toy_model("RAGF")
    zero_param(model, "decoder.copy.weight")
    t = model.params.tensors["decoder.copy.bias"]
    t.data = np.asarray(-40.0)  # p_gen == 0
    example = single_oov_example()
    enc = model.encode(example)
    output, _ = model.decoder.step(enc.context, model.decoder.init_state(enc.context), 2)
    # The single question token holds all pointer mass, so the mixed
    # distribution is a one-hot on its extended id.
    np.testing.assert_allclose(output.mixed.data[12], 1.0, atol=1e-12)
    run = model.decoder.teacher_forced(enc.context, example.answer)
    assert run.loss.item() < 1e-12


def test_zeroed_decoder_scores_uniformly():
    model, example = toy_model("RAGF")
    for name in list(model.params.tensors):
        if name.startswith("decoder."):
            zero_param(model, name)
    t = model.params.tensors["decoder.copy.bias"]
    t.data = np.asarray(40.0)  # sigmoid(40) rounds to exactly 1
    enc = model.encode(example)
    # In-vocabulary targets only: with the pointer fully off, each one
    # draws probability 1/V from the uniform vocabulary softmax.
    run = model.decoder.teacher_forced(enc.context, np.array([6, 4, 3]))
    np.testing.assert_allclose(run.loss.item(), np.log(12), atol=1e-12)


def test_teacher_forcing_shapes_and_contract():
    model, example = toy_model("RAGF")
    enc = model.encode(example)
    run = model.decoder.teacher_forced(enc.context, example.answer)
    assert len(run.states) == len(example.answer) == len(run.outputs)
    assert run.states[0].shape == (8,)
    with pytest.raises(ContractError):
        model.decoder.teacher_forced(enc.context, np.array([], dtype=np.int64))


def test_states_without_facts_ignore_product_evidence():
    model, example = toy_model("RAGF")
    other = QAExample(
        question=example.question,
        reviews=[np.array([10, 11]), np.array([5])],
        attributes=np.array([[9, 10]]),
        answer=example.answer,
        oov_map=dict(example.oov_map),
    )
    enc_a = model.encode(example)
    enc_b = model.encode(other)
    sa = model.decoder.states_without_facts(enc_a.context, example.answer)
    sb = model.decoder.states_without_facts(enc_b.context, example.answer)
    assert len(sa) == len(example.answer)
    for x, y in zip(sa, sb):
        np.testing.assert_allclose(x.data, y.data, atol=1e-12)
    # The facts-bearing run differs from the suppressed one.
    full = model.decoder.teacher_forced(enc_a.context, example.answer)
    assert not np.allclose(full.states[0].data, sa[0].data)


def test_single_example_overfits_in_fifty_steps():
    model, example = toy_model("RAGF", seed=11)
    params = model.params
    opt = AdagradState(lr=0.3)
    losses = []
    for _ in range(50):
        run = model.teacher_forced(example)
        losses.append(run.loss.item())
        zero_grads(params.tensors)
        ag.backward(run.loss, params=params.generator.values())
        opt.step(params.generator)
    assert losses[-1] < 0.2 * losses[0]
    assert losses[-1] < 0.5


def test_greedy_respects_max_len_and_stops_at_eos():
    model, example = toy_model("RAGF")
    enc = model.encode(example)
    with ag.no_grad():
        one = model.decoder.greedy(enc.context, max_len=1)
        full = model.decoder.greedy(enc.context, max_len=30)
    assert len(one.tokens) == 1
    assert len(full.tokens) <= 30
    if EOS in full.tokens:
        assert full.tokens.index(EOS) == len(full.tokens) - 1


def test_beam_width_one_equals_greedy():
    model, example = toy_model("RAGF", seed=13)
    enc = model.encode(example)
    with ag.no_grad():
        greedy = model.decoder.greedy(enc.context, max_len=8)
        beam = model.decoder.beam(enc.context, width=1, max_len=8)
    assert beam.tokens == greedy.tokens
    np.testing.assert_allclose(beam.log_prob, greedy.log_prob, atol=1e-12)


def test_wider_beam_never_scores_worse():
    for seed in (7, 13, 29):
        model, example = toy_model("RAGF", seed=seed)
        enc = model.encode(example)
        with ag.no_grad():
            narrow = model.decoder.beam(enc.context, width=1, max_len=8)
            wide = model.decoder.beam(enc.context, width=4, max_len=8)
        assert wide.normalized_score >= narrow.normalized_score - 1e-12


def test_beam_rejects_zero_width():
    model, example = toy_model("RAGF")
    enc = model.encode(example)
    with pytest.raises(ContractError):
        model.decoder.beam(enc.context, width=0, max_len=4)


def test_trace_records_are_json_friendly():
    model, example = toy_model("RAGF")
    enc = model.encode(example)
    with ag.no_grad():
        trace = model.decoder.greedy(enc.context, max_len=4)
    rec = trace.steps[0]
    assert isinstance(rec.token, int)
    assert isinstance(rec.gate, float) and 0.0 <= rec.gate <= 1.0
    assert isinstance(rec.p_gen, float)
    assert len(rec.question_attention) == len(example.question)
