"""Finite-difference verification of every differentiable operation.

Each check builds a scalar from one op (or one composite path), runs the
reverse pass, then compares against central differences with step 1e-5.
Large tensors are probed on a random subset of coordinates so the whole
suite stays well under a minute. Errors are reported relative to
max(1, |analytic|, |numeric|).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

from paag import autograd as ag
from paag import discriminator
from paag.autograd import Tensor
from paag.data import QAExample
from paag.discriminator import (generator_adversarial_term, vanilla_critic_loss,
                                wasserstein_critic_loss)
from paag.model import Model, ModelDims, ModelParams

FD_STEP = 1e-5
TOLERANCE = 1e-4
MAX_COORDS = 24
COMPOSITE_COORDS = 6


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    coords: int
    seconds: float

    def passed(self, tolerance: float = TOLERANCE) -> bool:
        return self.max_rel_error < tolerance


def _rel(analytic: float, numeric: float) -> float:
    if not (np.isfinite(analytic) and np.isfinite(numeric)):
        return float("inf")
    return abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))


def _sample_coords(shape, limit: int,
                   rng: np.random.Generator) -> List[Tuple[int, ...]]:
    size = int(np.prod(shape)) if shape else 1
    flat = (rng.choice(size, size=limit, replace=False)
            if size > limit else np.arange(size))
    return [np.unravel_index(i, shape) if shape else () for i in sorted(flat)]


def check_fn(name: str, fn: Callable[[], Tensor], inputs: Sequence[Tensor],
             rng: np.random.Generator, max_coords: int = MAX_COORDS) -> CheckResult:
    """Compare the reverse-mode gradient of ``fn`` against central
    differences on a coordinate sample of every input tensor."""
    started = time.perf_counter()
    grads = ag.grad(fn(), list(inputs))
    worst = 0.0
    coords = 0
    for tensor, grad in zip(inputs, grads):
        for idx in _sample_coords(tensor.shape, max_coords, rng):
            original = tensor.data[idx]
            tensor.data[idx] = original + FD_STEP
            hi = fn().item()
            tensor.data[idx] = original - FD_STEP
            lo = fn().item()
            tensor.data[idx] = original
            numeric = (hi - lo) / (2.0 * FD_STEP)
            worst = max(worst, _rel(float(grad.data[idx]), numeric))
            coords += 1
    return CheckResult(name, worst, coords, time.perf_counter() - started)


def _t(rng: np.random.Generator, *shape) -> Tensor:
    return Tensor(rng.standard_normal(shape), requires_grad=True)


# -- elementary op checks ----------------------------------------------


def _op_checks(rng: np.random.Generator):
    checks = []

    # The scalarizing weights are drawn once per check so all three
    # evaluations inside one finite-difference probe see the same scalar.
    def fixed(name, builder, inputs):
        w = Tensor(np.random.default_rng(len(name)).standard_normal(
            builder(inputs).shape))
        checks.append((name,
                       lambda b=builder, xs=tuple(inputs), w=w:
                       ag.sum_(ag.mul(b(xs), w)),
                       list(inputs), MAX_COORDS))

    away_from_zero = rng.standard_normal(8)
    away_from_zero += np.sign(away_from_zero) * 0.05

    fixed("add", lambda xs: ag.add(xs[0], xs[1]), [_t(rng, 3, 4), _t(rng, 3, 4)])
    fixed("sub_broadcast", lambda xs: ag.sub(xs[0], xs[1]), [_t(rng, 3, 4), _t(rng, 4)])
    fixed("mul", lambda xs: ag.mul(xs[0], xs[1]), [_t(rng, 5), _t(rng, 5)])
    fixed("div", lambda xs: ag.div(xs[0], xs[1]),
          [_t(rng, 4), Tensor(rng.uniform(0.5, 2.0, 4), requires_grad=True)])
    fixed("matmul", lambda xs: ag.matmul(xs[0], xs[1]), [_t(rng, 3, 4), _t(rng, 4, 2)])
    fixed("matvec", lambda xs: ag.matmul(xs[0], xs[1]), [_t(rng, 3, 4), _t(rng, 4)])
    fixed("tanh", lambda xs: ag.tanh(xs[0]), [_t(rng, 6)])
    fixed("sigmoid", lambda xs: ag.sigmoid(xs[0]), [_t(rng, 6)])
    fixed("relu", lambda xs: ag.relu(xs[0]),
          [Tensor(away_from_zero.copy(), requires_grad=True)])
    fixed("exp", lambda xs: ag.exp(xs[0]), [_t(rng, 5)])
    fixed("log", lambda xs: ag.log(xs[0]),
          [Tensor(rng.uniform(0.2, 3.0, 5), requires_grad=True)])
    fixed("sqrt", lambda xs: ag.sqrt(xs[0]),
          [Tensor(rng.uniform(0.2, 3.0, 5), requires_grad=True)])
    fixed("sum_axis", lambda xs: ag.sum_(xs[0], axis=0), [_t(rng, 4, 3)])
    fixed("mean", lambda xs: ag.mean_(xs[0], axis=1), [_t(rng, 3, 5)])
    fixed("softmax", lambda xs: ag.softmax(xs[0]), [_t(rng, 7)])
    mask = np.array([True, False, True, True, False, True])
    fixed("softmax_masked", lambda xs: ag.softmax(xs[0], mask=mask), [_t(rng, 6)])
    fixed("max_axis", lambda xs: ag.max_(xs[0], axis=1), [_t(rng, 4, 5)])
    fixed("outer_add", lambda xs: ag.outer_add(xs[0], xs[1]),
          [_t(rng, 3, 2), _t(rng, 4, 2)])
    fixed("narrow_concat",
          lambda xs: ag.concat([ag.narrow(xs[0], 0, 1, 2), xs[1]]),
          [_t(rng, 4), _t(rng, 3)])
    fixed("stack", lambda xs: ag.stack([xs[0], xs[1]]), [_t(rng, 4), _t(rng, 4)])
    fixed("take", lambda xs: ag.take(xs[0], np.array([2, 0, 2])), [_t(rng, 4, 3)])
    fixed("scatter_add",
          lambda xs: ag.scatter_add(xs[0], np.array([1, 3, 1]), 5), [_t(rng, 3)])
    fixed("transpose_reshape",
          lambda xs: ag.reshape(ag.transpose(xs[0]), (6,)), [_t(rng, 2, 3)])
    return checks


# -- composite checks through the real model ---------------------------


def toy_model(variant: str = "PAAG", seed: int = 7) -> Tuple[Model, QAExample]:
    dims = ModelDims(vocab_size=12, embedding=5, hidden=4, critic_filters=3,
                     critic_widths=(1, 2), critic_proj=6)
    params = ModelParams(dims, variant, np.random.default_rng(seed))
    example = QAExample(
        question=np.array([4, 5, 12, 6]),
        reviews=[np.array([7, 8, 4]), np.array([9, 10])],
        attributes=np.array([[5, 7], [8, 9]]),
        answer=np.array([6, 12, 3]),
        oov_map={"oovword": 12},
    )
    return Model(params), example


def _composite_checks(rng: np.random.Generator):
    model, example = toy_model()
    params = model.params

    def named(prefixes, exclude=()):
        return [params.tensors[n] for n in sorted(params.tensors)
                if n.startswith(tuple(prefixes)) and n not in exclude]

    generator_all = [params.tensors[n] for n in params.generator_names]
    critic_all = [params.tensors[n] for n in params.critic_names]
    # The adversarial term reads decoder states, which the vocabulary
    # projection and the copy gate never feed.
    state_path = [params.tensors[n] for n in params.generator_names
                  if not n.startswith(("decoder.vocab", "decoder.copy"))]
    # The interpolate is rebuilt from raw numbers each call, so the
    # reference encoder reaches a penalized loss only through data the
    # graph deliberately drops; finite differences would disagree there.
    critic_score_path = named(["critic.conv", "critic.project", "critic.head"])
    # Parameters that shape d(score)/d(interpolate) only through relu
    # masks or pooling choices are locally constant in the penalty.
    penalty_path = named(["critic.conv1.weight", "critic.conv2.weight",
                          "critic.project.features", "critic.head.weight"])

    def loss_g():
        return model.teacher_forced(example).loss

    def streams():
        enc = model.encode(example)
        run = model.decoder.teacher_forced(enc.context, example.answer)
        nof = model.decoder.states_without_facts(enc.context, example.answer)
        fake = [s.detach() for s in run.states]
        no_facts = [s.detach() for s in nof]
        return enc, fake, no_facts

    def loss_d(gp_lambda):
        enc, fake, no_facts = streams()
        real = model.reference_encoder(example.answer)
        loss, _ = wasserstein_critic_loss(
            model.critic, real, fake, no_facts,
            enc.context.memory_vector.detach(), enc.context.reviews.fused.detach(),
            epsilon=0.37, gp_lambda=gp_lambda)
        return loss

    def penalty_only():
        enc, fake, _ = streams()
        real_m = ag.stack([s.detach() for s in model.reference_encoder(example.answer)])
        interp = Tensor(0.37 * ag.stack(fake).data + 0.63 * real_m.data,
                        requires_grad=True)
        score = model.critic.score(interp, enc.context.memory_vector.detach(),
                                   enc.context.reviews.fused.detach())
        (g,) = ag.grad(score, [interp], create_graph=True)
        norm = ag.sqrt(ag.add(ag.sum_(ag.mul(g, g)),
                              Tensor(discriminator.NORM_GUARD)))
        deviation = ag.sub(norm, Tensor(1.0))
        return ag.mul(deviation, deviation)

    def loss_d_vanilla():
        enc, fake, _ = streams()
        real = model.reference_encoder(example.answer)
        loss, _ = vanilla_critic_loss(
            model.critic, real, fake,
            enc.context.memory_vector.detach(), enc.context.reviews.fused.detach())
        return loss

    def adversarial_term():
        enc = model.encode(example)
        run = model.decoder.teacher_forced(enc.context, example.answer)
        return generator_adversarial_term(
            model.critic, run.states, enc.context.memory_vector,
            enc.context.reviews.fused, objective="wasserstein")

    def question_path():
        enc = model.question_encoder(example.question)
        return ag.sum_(ag.mul(enc.final, enc.final))

    def reader_path():
        q = model.question_encoder(example.question)
        reviews = model.review_reader(example.reviews, q)
        return ag.sum_(ag.mul(reviews.fused, reviews.fused))

    def memory_path():
        q = model.question_encoder(example.question)
        readout = model.memory.read(example.attributes, q.final)
        return ag.sum_(ag.mul(readout.vector, readout.vector))

    return [
        ("encoder_bilstm", question_path,
         named(["embedding", "question_encoder"]), COMPOSITE_COORDS),
        ("review_reader", reader_path,
         named(["embedding", "question_encoder", "review_encoder", "reader"]),
         COMPOSITE_COORDS),
        ("attribute_memory", memory_path,
         named(["embedding", "question_encoder", "memory"]), COMPOSITE_COORDS),
        ("loss_g_end_to_end", loss_g, generator_all, COMPOSITE_COORDS),
        ("critic_reference_bridge", lambda: loss_d(0.0), critic_all,
         COMPOSITE_COORDS),
        ("loss_d_wasserstein_gp", lambda: loss_d(10.0), critic_score_path,
         COMPOSITE_COORDS),
        ("penalty_double_backward", penalty_only, penalty_path, COMPOSITE_COORDS),
        ("loss_d_vanilla_bce", loss_d_vanilla, critic_all, COMPOSITE_COORDS),
        ("generator_adversarial_term", adversarial_term, state_path,
         COMPOSITE_COORDS),
    ]


def run_all(seed: int = 0) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for name, fn, inputs, max_coords in _op_checks(rng) + _composite_checks(rng):
        results.append(check_fn(name, fn, inputs, rng, max_coords=max_coords))
    return results


def format_report(results: List[CheckResult],
                  tolerance: float = TOLERANCE) -> str:
    lines = [f"{'operation':<28} {'max rel err':>12} {'coords':>7} {'sec':>6}  status"]
    for r in results:
        status = "ok" if r.passed(tolerance) else "FAIL"
        lines.append(f"{r.name:<28} {r.max_rel_error:>12.3e} {r.coords:>7} "
                     f"{r.seconds:>6.2f}  {status}")
    worst = max(r.max_rel_error for r in results)
    total = sum(r.seconds for r in results)
    lines.append(f"{len(results)} checks, worst {worst:.3e}, "
                 f"tolerance {tolerance:.0e}, {total:.1f}s total")
    return "\n".join(lines)


def main(seed: int = 0, tolerance: float = TOLERANCE) -> int:
    results = run_all(seed=seed)
    print(format_report(results, tolerance))
    return 0 if all(r.passed(tolerance) for r in results) else 1


if __name__ == "__main__":
    raise SystemExit(main())
