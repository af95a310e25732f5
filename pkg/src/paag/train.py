"""Training, evaluation and generation drivers.

Training treats a batch as the mean of per-example losses, so batched
and per-example objectives agree exactly. Warm-up epochs run with the
likelihood loss only; afterwards each batch first takes the configured
number of critic steps (on detached generator states) and then one
generator step whose loss adds the weighted adversarial term.

Everything is deterministic for a fixed seed: parameter init, shuffle
order and interpolation draws come from seeded generators, and
checkpoints are byte-stable.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from paag import autograd as ag
from paag import checkpoint as ckpt
from paag.autograd import Tensor
from paag.config import RunConfig
from paag.data import (EOS, QAExample, RawExample, Vocabulary, build_vocab,
                       corpus_token_streams, decode_ids, encode_corpus, load_jsonl,
                       tokenize)
from paag.discriminator import (generator_adversarial_term, vanilla_critic_loss,
                                wasserstein_critic_loss)
from paag.errors import CheckpointError, ConfigError, TrainingDiverged
from paag.metrics import (bm25_scores, corpus_bleu, embedding_metrics, rank_reviews,
                          sentence_bleu1, tfidf_scores)
from paag.model import Model, ModelDims, ModelParams
from paag.optim import AdagradState, clip_grad_norm, zero_grads

log = logging.getLogger("paag.train")

CURVE_COLUMNS = ("step", "loss_g", "loss_d", "D_real", "D_fake_facts",
                 "D_fake_nofacts", "grad_penalty", "grad_norm_mean")


@dataclass
class TrainResult:
    checkpoint_path: str
    curves_path: str
    final_loss_g: float
    vocab: Vocabulary
    params: ModelParams
    model: Model


def make_dims(config: RunConfig, vocab_size: int) -> ModelDims:
    return ModelDims(
        vocab_size=vocab_size,
        embedding=config.embedding_size,
        hidden=config.hidden_size,
        critic_filters=config.critic_filters,
        critic_widths=config.parsed_critic_widths(),
        critic_proj=config.critic_proj,
    )


def build_model(config: RunConfig, vocab_size: int) -> tuple[ModelParams, Model]:
    rng = np.random.default_rng(config.seed)
    params = ModelParams(make_dims(config, vocab_size), config.variant, rng)
    return params, Model(params, attend_review_words=config.attend_review_words)


def _mean_loss(losses: Sequence[Tensor]) -> Tensor:
    return ag.mean_(ag.stack(list(losses)))


def _check_finite(value: float, step: int, batch: Sequence[QAExample],
                  out_dir: str, what: str) -> None:
    if np.isfinite(value):
        return
    dump_path = os.path.join(out_dir, "diverged_batch.json")
    payload = {
        "step": step,
        "loss": what,
        "value": repr(value),
        "examples": [
            {"question": ex.question.tolist(), "answer": ex.answer.tolist(),
             "reviews": [r.tolist() for r in ex.reviews],
             "attributes": ex.attributes.tolist(), "oov_map": ex.oov_map}
            for ex in batch
        ],
    }
    os.makedirs(out_dir, exist_ok=True)
    with open(dump_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
    raise TrainingDiverged(
        f"non-finite {what} at step {step}; batch dumped to {dump_path}")


def _critic_step(model: Model, config: RunConfig, batch: Sequence[QAExample],
                 critic_opt: AdagradState, rng: np.random.Generator,
                 step: int, out_dir: str) -> Dict[str, float]:
    params = model.params
    losses = []
    d_real, d_fake, d_nof, penalties, norms = [], [], [], [], []
    for ex in batch:
        with ag.no_grad():
            enc = model.encode(ex)
            run = model.decoder.teacher_forced(enc.context, ex.answer)
            nof = model.decoder.states_without_facts(enc.context, ex.answer)
            memory_vec = enc.context.memory_vector
            fused = enc.context.reviews.fused
        fake = [s.detach() for s in run.states]
        no_facts = [s.detach() for s in nof]
        real = model.reference_encoder(ex.answer)
        if config.wasserstein:
            eps = float(rng.uniform()) if config.gradient_penalty else 0.5
            gp_lambda = config.gp_lambda if config.gradient_penalty else 0.0
            loss, diag = wasserstein_critic_loss(
                model.critic, real, fake, no_facts,
                memory_vec.detach(), fused.detach(),
                epsilon=eps, gp_lambda=gp_lambda,
                per_step=config.per_step_critic)
            d_nof.append(diag.score_no_facts)
            penalties.append(diag.penalty)
            norms.extend(diag.interpolate_norms)
        else:
            loss, diag = vanilla_critic_loss(
                model.critic, real, fake, memory_vec.detach(), fused.detach())
        losses.append(loss)
        d_real.append(diag.score_real)
        d_fake.append(diag.score_fake)
    total = _mean_loss(losses)
    _check_finite(total.item(), step, batch, out_dir, "loss_d")
    trained = params.critic_scoring
    zero_grads(params.tensors)
    ag.backward(total, params=trained.values())
    clip_grad_norm(trained, config.grad_clip)
    critic_opt.step(trained)
    return {
        "loss_d": total.item(),
        "D_real": float(np.mean(d_real)),
        "D_fake_facts": float(np.mean(d_fake)),
        "D_fake_nofacts": float(np.mean(d_nof)) if d_nof else float("nan"),
        "grad_penalty": float(np.mean(penalties)) if penalties else float("nan"),
        "grad_norm_mean": float(np.mean(norms)) if norms else float("nan"),
    }


def _generator_step(model: Model, config: RunConfig, batch: Sequence[QAExample],
                    gen_opt: AdagradState, adversarial: bool,
                    step: int, out_dir: str) -> float:
    params = model.params
    losses = []
    for ex in batch:
        enc = model.encode(ex)
        run = model.decoder.teacher_forced(enc.context, ex.answer)
        loss = run.loss
        if adversarial:
            objective = "wasserstein" if config.wasserstein else config.vanilla_objective
            adv = generator_adversarial_term(
                model.critic, run.states, enc.context.memory_vector,
                enc.context.reviews.fused, objective=objective)
            loss = ag.add(loss, ag.mul(Tensor(config.adv_weight), adv))
        losses.append((loss, run.loss.item()))
    total = _mean_loss([pair[0] for pair in losses])
    loss_g_value = float(np.mean([pair[1] for pair in losses]))
    _check_finite(total.item(), step, batch, out_dir, "loss_g")
    zero_grads(params.tensors)
    ag.backward(total, params=params.generator.values())
    clip_grad_norm(params.generator, config.grad_clip)
    gen_opt.step(params.generator)
    return loss_g_value


def train(config: RunConfig,
          train_records: Optional[List[RawExample]] = None) -> TrainResult:
    config.validate()
    if train_records is None:
        if not config.train_path:
            raise ConfigError("train requires train_path (or in-memory records)")
        train_records = load_jsonl(config.train_path)
    if not train_records:
        raise ConfigError("training corpus is empty")

    os.makedirs(config.out_dir, exist_ok=True)
    vocab = build_vocab(corpus_token_streams(train_records), config.vocab_size)
    examples = encode_corpus(train_records, vocab)
    params, model = build_model(config, len(vocab))

    gen_opt = AdagradState(lr=config.learning_rate, eps=config.adagrad_eps)
    critic_opt = AdagradState(lr=config.critic_lr, eps=config.adagrad_eps)
    shuffle_rng = np.random.default_rng(config.seed + 1)
    interp_rng = np.random.default_rng(config.seed + 2)

    curves_path = os.path.join(config.out_dir, "curves.csv")
    meta = {"config": config.as_dict(), "vocab": vocab.words}
    step = 0
    last_loss_g = float("nan")
    with open(curves_path, "w", newline="", encoding="utf-8") as curve_file:
        writer = csv.writer(curve_file)
        writer.writerow(CURVE_COLUMNS)
        for epoch in range(config.epochs):
            order = shuffle_rng.permutation(len(examples))
            adversarial = config.uses_critic and epoch >= config.warmup_epochs
            for lo in range(0, len(examples), config.batch_size):
                batch = [examples[i] for i in order[lo:lo + config.batch_size]]
                critic_stats: Dict[str, float] = {}
                if adversarial:
                    for _ in range(config.critic_iters):
                        critic_stats = _critic_step(
                            model, config, batch, critic_opt, interp_rng,
                            step, config.out_dir)
                last_loss_g = _generator_step(
                    model, config, batch, gen_opt, adversarial, step, config.out_dir)
                step += 1
                row = [step, f"{last_loss_g:.6f}"]
                for col in CURVE_COLUMNS[2:]:
                    value = critic_stats.get(col)
                    row.append("" if value is None or not np.isfinite(value)
                               else f"{value:.6f}")
                writer.writerow(row)
            epoch_path = os.path.join(config.out_dir, f"ckpt-{epoch + 1:03d}.paag")
            ckpt.save(epoch_path, params.tensors, meta)
            log.info("epoch %d done, loss_g %.4f", epoch + 1, last_loss_g)

    final_path = os.path.join(config.out_dir, "model.paag")
    ckpt.save(final_path, params.tensors, meta)
    return TrainResult(checkpoint_path=final_path, curves_path=curves_path,
                       final_loss_g=last_loss_g, vocab=vocab, params=params,
                       model=model)


# -- loading ------------------------------------------------------------


def load_model(checkpoint_path) -> tuple[Model, RunConfig, Vocabulary]:
    arrays, meta = ckpt.load(checkpoint_path)
    if "config" not in meta or "vocab" not in meta:
        raise CheckpointError(f"{checkpoint_path}: missing config or vocab metadata")
    config = RunConfig(**meta["config"])
    vocab = Vocabulary(list(meta["vocab"]))
    emb_shape = arrays.get("embedding.weight")
    if emb_shape is None or emb_shape.shape[0] != len(vocab):
        found = None if emb_shape is None else emb_shape.shape[0]
        raise CheckpointError(
            f"{checkpoint_path}: vocabulary mismatch, embedding rows {found} "
            f"vs vocab size {len(vocab)}")
    params, model = build_model(config, len(vocab))
    ckpt.restore(params.tensors, arrays)
    return model, config, vocab


# -- evaluation ---------------------------------------------------------


def _tokens_of(ids: Sequence[int], vocab: Vocabulary, oov_map) -> List[str]:
    return decode_ids(ids, vocab, oov_map, strip_eos=True)


def score_generations(candidates: List[List[str]], references: List[List[str]],
                      embedding: np.ndarray, vocab: Vocabulary) -> dict:
    lookup = vocab.index
    bleu = corpus_bleu(candidates, references)
    emb = embedding_metrics(candidates, references, embedding, lookup)
    return {"bleu": bleu.as_dict(), "embedding": emb.as_dict()}


def evaluate(checkpoint_path, dataset_path, beam_size: Optional[int] = None,
             per_example_csv: Optional[str] = None) -> dict:
    model, config, vocab = load_model(checkpoint_path)
    records = load_jsonl(dataset_path)
    examples = encode_corpus(records, vocab)
    width = beam_size if beam_size is not None else config.beam_size

    candidates, references = [], []
    bm25_answers, tfidf_answers = [], []
    with ag.no_grad():
        for rec, ex in zip(records, examples):
            trace = model.beam(ex, width=width, max_len=config.max_answer_len)
            candidates.append(_tokens_of(trace.tokens, vocab, ex.oov_map))
            references.append(_tokens_of(ex.answer, vocab, ex.oov_map))
            question_tokens = tokenize(rec.question)
            review_tokens = [tokenize(r) for r in rec.reviews]
            bm25_top = rank_reviews(bm25_scores(question_tokens, review_tokens))[0]
            tfidf_top = rank_reviews(tfidf_scores(question_tokens, review_tokens))[0]
            bm25_answers.append(review_tokens[bm25_top])
            tfidf_answers.append(review_tokens[tfidf_top])

    embedding = model.params["embedding.weight"].data
    report = {
        "n_examples": len(examples),
        "variant": config.variant,
        "beam_size": width,
        "model": score_generations(candidates, references, embedding, vocab),
        "baselines": {
            "bm25": score_generations(bm25_answers, references, embedding, vocab),
            "tfidf": score_generations(tfidf_answers, references, embedding, vocab),
        },
    }
    if per_example_csv:
        with open(per_example_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "bleu1"])
            for i, (cand, ref) in enumerate(zip(candidates, references)):
                writer.writerow([i, f"{sentence_bleu1(cand, ref):.6f}"])
    return report


def generate(checkpoint_path, dataset_path, out_path,
             beam_size: Optional[int] = None) -> int:
    """Write generation traces as JSON lines; returns the example count."""
    model, config, vocab = load_model(checkpoint_path)
    records = load_jsonl(dataset_path)
    examples = encode_corpus(records, vocab)
    width = beam_size if beam_size is not None else config.beam_size
    with open(out_path, "w", encoding="utf-8") as fh, ag.no_grad():
        for rec, ex in zip(records, examples):
            trace = model.beam(ex, width=width, max_len=config.max_answer_len)
            obj = {
                "question": rec.question,
                "reference": rec.answer,
                "generated": " ".join(_tokens_of(trace.tokens, vocab, ex.oov_map)),
                "log_prob": trace.log_prob,
                "normalized_score": trace.normalized_score,
                "gates": [s.gate for s in trace.steps],
                "p_gen": [s.p_gen for s in trace.steps],
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
    return len(examples)
