"""Parameter construction and per-example wiring of all components.

Parameters live in one flat name -> Tensor dictionary (checkpoint
order is the sorted names). The generator group covers embedding,
encoders, memory and decoder; the critic group covers the reference
encoder, bridge, convolutions, fact projections and scoring head.
Variants without an adversarial part never create critic parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from paag import autograd as ag
from paag.autograd import Tensor
from paag.data import PAD, QAExample
from paag.decoder import AnswerDecoder, DecodeContext, GenerationTrace, TeacherForcedRun
from paag.discriminator import ConvCritic, ReferenceEncoder
from paag.encoders import BiLSTM, Embedding, LSTMCell, QuestionEncoder, ReviewReader
from paag.errors import ConfigError
from paag.kvmn import AttributeMemory, MemoryReadout

INIT_RANGE = 0.08

VARIANTS = ("RAGF", "RAGFD", "RAGFWD", "PAAG")


def variant_uses_critic(variant: str) -> bool:
    return variant in ("RAGFD", "RAGFWD", "PAAG")


def variant_is_wasserstein(variant: str) -> bool:
    return variant in ("RAGFWD", "PAAG")


def variant_uses_penalty(variant: str) -> bool:
    return variant == "PAAG"


@dataclass
class ModelDims:
    vocab_size: int
    embedding: int = 32
    hidden: int = 32
    attn: Optional[int] = None        # attention bottleneck, defaults to hidden
    critic_filters: int = 16
    critic_widths: Tuple[int, ...] = (1, 2, 3)
    critic_proj: int = 32

    def __post_init__(self):
        if self.attn is None:
            self.attn = self.hidden
        if self.vocab_size < 4:
            raise ConfigError(f"vocab_size must be at least 4, got {self.vocab_size}")
        for field_name in ("embedding", "hidden", "attn", "critic_filters", "critic_proj"):
            if getattr(self, field_name) < 1:
                raise ConfigError(f"{field_name} must be positive")
        if not self.critic_widths:
            raise ConfigError("critic_widths must not be empty")


class ModelParams:
    """Named parameter set with generator and critic sub-groups."""

    def __init__(self, dims: ModelDims, variant: str, rng: np.random.Generator):
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
        self.dims = dims
        self.variant = variant
        self.tensors: Dict[str, Tensor] = {}
        self.generator_names: List[str] = []
        self.critic_names: List[str] = []
        self._build(rng)

    def _new(self, name: str, shape, group: List[str],
             rng: np.random.Generator) -> Tensor:
        t = Tensor(rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape),
                   requires_grad=True)
        self.tensors[name] = t
        group.append(name)
        return t

    def _build(self, rng: np.random.Generator) -> None:
        d = self.dims
        V, E, H, A = d.vocab_size, d.embedding, d.hidden, d.attn
        two_h = 2 * H
        gen = self.generator_names

        emb = self._new("embedding.weight", (V, E), gen, rng)
        emb.data[PAD, :] = 0.0

        for side in ("question_encoder", "review_encoder"):
            for direction in ("forward", "backward"):
                self._new(f"{side}.{direction}.weight", (E + H, 4 * H), gen, rng)
                self._new(f"{side}.{direction}.bias", (4 * H,), gen, rng)

        self._new("reader.attn_question", (two_h, A), gen, rng)
        self._new("reader.attn_review", (two_h, A), gen, rng)
        self._new("reader.attn_score", (A,), gen, rng)
        self._new("reader.fusion", (two_h, two_h), gen, rng)

        self._new("memory.key_transform", (two_h, E), gen, rng)

        self._new("decoder.init.weight", (E + 2 * two_h, two_h), gen, rng)
        self._new("decoder.init.bias", (two_h,), gen, rng)
        self._new("decoder.cell.weight", (2 * two_h + E + two_h, 4 * two_h), gen, rng)
        self._new("decoder.cell.bias", (4 * two_h,), gen, rng)
        self._new("decoder.attn.question.weight", (two_h, A), gen, rng)
        self._new("decoder.attn.question.score", (A,), gen, rng)
        self._new("decoder.attn.review.weight", (two_h, A), gen, rng)
        self._new("decoder.attn.review.score", (A,), gen, rng)
        self._new("decoder.attn.state.weight", (two_h, A), gen, rng)
        self._new("decoder.gate.weight", (two_h,), gen, rng)
        self._new("decoder.gate.bias", (), gen, rng)
        self._new("decoder.output.weight", (two_h + 2 * two_h, two_h), gen, rng)
        self._new("decoder.output.bias", (two_h,), gen, rng)
        self._new("decoder.vocab.weight", (two_h, V), gen, rng)
        self._new("decoder.vocab.bias", (V,), gen, rng)
        self._new("decoder.copy.weight", (two_h + 2 * two_h + E,), gen, rng)
        self._new("decoder.copy.bias", (), gen, rng)

        if variant_uses_critic(self.variant):
            crit = self.critic_names
            self._new("critic.reference.weight", (E + two_h, 4 * two_h), crit, rng)
            self._new("critic.reference.bias", (4 * two_h,), crit, rng)
            self._new("critic.bridge.weight", (two_h, two_h), crit, rng)
            self._new("critic.bridge.bias", (two_h,), crit, rng)
            for width in d.critic_widths:
                self._new(f"critic.conv{width}.weight",
                          (width * two_h, d.critic_filters), crit, rng)
                self._new(f"critic.conv{width}.bias", (d.critic_filters,), crit, rng)
            n_feats = len(d.critic_widths) * d.critic_filters
            self._new("critic.project.features", (n_feats, d.critic_proj), crit, rng)
            self._new("critic.project.memory", (E, d.critic_proj), crit, rng)
            self._new("critic.project.reviews", (two_h, d.critic_proj), crit, rng)
            self._new("critic.head.weight", (d.critic_proj,), crit, rng)
            self._new("critic.head.bias", (), crit, rng)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def group(self, names: List[str]) -> Dict[str, Tensor]:
        return {n: self.tensors[n] for n in names}

    @property
    def generator(self) -> Dict[str, Tensor]:
        return self.group(self.generator_names)

    @property
    def critic(self) -> Dict[str, Tensor]:
        return self.group(self.critic_names)

    @property
    def critic_scoring(self) -> Dict[str, Tensor]:
        """Critic parameters minus the two stream builders.

        The ground-truth encoder and its bridge define the comparison
        space; training them under the critic loss lets the score scale
        inflate without bound and voids the norm constraint, so critic
        updates touch only the scoring network.
        """
        return {n: t for n, t in self.critic.items()
                if not n.startswith(("critic.reference", "critic.bridge"))}


@dataclass
class EncodedExample:
    context: DecodeContext
    memory: MemoryReadout


class Model:
    """Bundles components around a parameter set for per-example use."""

    def __init__(self, params: ModelParams, attend_review_words: bool = False):
        self.params = params
        self.attend_review_words = attend_review_words
        p = params
        self.embedding = Embedding(p["embedding.weight"])
        self.question_encoder = QuestionEncoder(
            self.embedding,
            BiLSTM(LSTMCell(p["question_encoder.forward.weight"],
                            p["question_encoder.forward.bias"]),
                   LSTMCell(p["question_encoder.backward.weight"],
                            p["question_encoder.backward.bias"])))
        self.review_reader = ReviewReader(
            self.embedding,
            BiLSTM(LSTMCell(p["review_encoder.forward.weight"],
                            p["review_encoder.forward.bias"]),
                   LSTMCell(p["review_encoder.backward.weight"],
                            p["review_encoder.backward.bias"])),
            p["reader.attn_question"], p["reader.attn_review"],
            p["reader.attn_score"], p["reader.fusion"])
        self.memory = AttributeMemory(self.embedding, p["memory.key_transform"])
        self.decoder = AnswerDecoder(
            self.embedding,
            LSTMCell(p["decoder.cell.weight"], p["decoder.cell.bias"]),
            p["decoder.init.weight"], p["decoder.init.bias"],
            p["decoder.attn.question.weight"], p["decoder.attn.question.score"],
            p["decoder.attn.review.weight"], p["decoder.attn.review.score"],
            p["decoder.attn.state.weight"],
            p["decoder.gate.weight"], p["decoder.gate.bias"],
            p["decoder.output.weight"], p["decoder.output.bias"],
            p["decoder.vocab.weight"], p["decoder.vocab.bias"],
            p["decoder.copy.weight"], p["decoder.copy.bias"])
        if variant_uses_critic(params.variant):
            self.reference_encoder = ReferenceEncoder(
                self.embedding,
                LSTMCell(p["critic.reference.weight"], p["critic.reference.bias"]),
                p["critic.bridge.weight"], p["critic.bridge.bias"])
            self.critic = ConvCritic(
                {w: p[f"critic.conv{w}.weight"] for w in params.dims.critic_widths},
                {w: p[f"critic.conv{w}.bias"] for w in params.dims.critic_widths},
                p["critic.project.features"], p["critic.project.memory"],
                p["critic.project.reviews"], p["critic.head.weight"],
                p["critic.head.bias"])
        else:
            self.reference_encoder = None
            self.critic = None

    # -- per-example plumbing -------------------------------------------

    def encode(self, example: QAExample,
               question_mask: Optional[np.ndarray] = None,
               review_token_masks: Optional[List[np.ndarray]] = None,
               review_mask: Optional[np.ndarray] = None,
               attribute_mask: Optional[np.ndarray] = None) -> EncodedExample:
        question = self.question_encoder(example.question, question_mask)
        reviews = self.review_reader(example.reviews, question,
                                     token_masks=review_token_masks,
                                     review_mask=review_mask)
        memory = self.memory.read(example.attributes, question.final,
                                  mask=attribute_mask)
        ctx = DecodeContext(
            question=question, reviews=reviews, memory_vector=memory.vector,
            question_ids=example.question, n_oov=example.n_oov,
            attend_review_words=self.attend_review_words)
        return EncodedExample(context=ctx, memory=memory)

    def teacher_forced(self, example: QAExample) -> TeacherForcedRun:
        enc = self.encode(example)
        return self.decoder.teacher_forced(enc.context, example.answer)

    def greedy(self, example: QAExample, max_len: int) -> GenerationTrace:
        enc = self.encode(example)
        return self.decoder.greedy(enc.context, max_len)

    def beam(self, example: QAExample, width: int, max_len: int) -> GenerationTrace:
        enc = self.encode(example)
        return self.decoder.beam(enc.context, width, max_len)
