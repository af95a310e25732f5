"""Synthetic product QA corpora with controllable review noise.

Each generated product carries a set of attribute facts plus one fact
that appears only in a review. Every example asks about one fact and
the reference answer states its value, so generated corpora are always
answerable from the inputs. At noise 0, every review sentence states a
true fact about the product; with noise, individual review sentences
are replaced by distractor strings of filler words, except that a
review carrying the fact a question asks about is never noised away.

``generate(spec, seed)`` is a pure function: the same spec and seed
produce the same corpus byte for byte.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import List, Tuple

from paag.data import RawExample
from paag.errors import ConfigError

FACT_KEYS: Tuple[str, ...] = (
    "color", "size", "material", "brand", "weight", "battery",
    "screen", "origin", "warranty", "style", "texture", "flavor",
)

FACT_VALUES = {
    "color": ("red", "blue", "green", "black", "white", "silver", "purple", "pink"),
    "size": ("small", "medium", "large", "tiny", "huge", "compact"),
    "material": ("cotton", "steel", "plastic", "wood", "leather", "glass", "ceramic"),
    "brand": ("acme", "zenbo", "nordex", "luma", "vexa", "orbit"),
    "weight": ("light", "heavy", "feather", "solid"),
    "battery": ("lasting", "weak", "average", "excellent"),
    "screen": ("bright", "dim", "sharp", "glossy"),
    "origin": ("germany", "japan", "vietnam", "brazil", "canada"),
    "warranty": ("yearlong", "monthly", "lifetime", "short"),
    "style": ("casual", "formal", "sporty", "vintage", "modern"),
    "texture": ("soft", "rough", "smooth", "silky"),
    "flavor": ("sweet", "bitter", "mild", "spicy"),
}

QUESTION_TEMPLATES: Tuple[str, ...] = (
    "can anyone tell me what {key} this product has",
    "i want to know the {key} of this item please",
    "does someone know which {key} it comes with",
    "what is the {key} of this one exactly",
    "hello could you share the {key} before i buy",
)

CODE_QUESTION_TEMPLATE = "for item {code} what {key} does it come with"

ANSWER_TEMPLATES: Tuple[str, ...] = (
    "the {key} is {value} according to my experience with it",
    "mine came with {value} {key} and works fine so far",
    "it is {value} for sure i checked after delivery",
    "as far as i can tell the {key} is {value}",
)

REVIEW_TEMPLATES: Tuple[str, ...] = (
    "the {key} is {value} and overall quality seems good",
    "i really like the {value} {key} on this one",
    "after a week the {key} still looks {value} to me",
)


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for corpus generation.

    ``vocab_size`` sizes the filler-word pool used by distractor
    reviews; template and fact words come on top of it, so the corpus
    vocabulary is a bit larger than this number.
    """

    num_products: int = 64
    attributes_per_product: int = 5
    reviews_per_product: int = 3
    noise_rate: float = 0.0
    vocab_size: int = 150
    review_fact_share: float = 0.3   # share of questions about the review-only fact
    code_question_share: float = 0.25
    question_templates: Tuple[str, ...] = QUESTION_TEMPLATES

    def validate(self) -> None:
        if not (0.0 <= self.noise_rate <= 1.0):
            raise ConfigError(f"noise_rate must lie in [0, 1], got {self.noise_rate}")
        if self.num_products < 1:
            raise ConfigError("num_products must be at least 1")
        if self.reviews_per_product < 1:
            raise ConfigError("reviews_per_product must be at least 1")
        if not (0 <= self.attributes_per_product <= len(FACT_KEYS) - 1):
            raise ConfigError(
                f"attributes_per_product must lie in [0, {len(FACT_KEYS) - 1}]")
        if self.vocab_size < 10:
            raise ConfigError("vocab_size must be at least 10")
        if not self.question_templates:
            raise ConfigError("question_templates must not be empty")


def _fill(template: str, **kw) -> str:
    return template.format(**kw)


def generate(spec: SyntheticSpec, seed: int) -> List[RawExample]:
    """One example per product: reviews, attribute table, question, answer."""
    spec.validate()
    rng = random.Random(seed)
    fillers = [f"w{i:03d}" for i in range(spec.vocab_size)]
    examples = []
    for product in range(spec.num_products):
        keys = rng.sample(FACT_KEYS, spec.attributes_per_product + 1)
        attr_keys, review_key = keys[:-1], keys[-1]
        attributes = [(k, rng.choice(FACT_VALUES[k])) for k in attr_keys]
        review_fact = (review_key, rng.choice(FACT_VALUES[review_key]))
        facts = attributes + [review_fact]

        ask_review_fact = rng.random() < spec.review_fact_share
        asked = review_fact if ask_review_fact else rng.choice(attributes or [review_fact])

        reviews = []
        carrier = rng.randrange(spec.reviews_per_product)
        for slot in range(spec.reviews_per_product):
            fact = review_fact if slot == carrier else rng.choice(facts)
            sentence = _fill(rng.choice(REVIEW_TEMPLATES), key=fact[0], value=fact[1])
            noisy = rng.random() < spec.noise_rate
            # The carrier review keeps the asked review fact alive even
            # under full noise, so every question stays answerable.
            if noisy and not (slot == carrier and ask_review_fact):
                sentence = " ".join(rng.choice(fillers) for _ in range(rng.randint(6, 9)))
            reviews.append(sentence)

        if rng.random() < spec.code_question_share:
            code = f"x{product:04d}q"
            question = _fill(CODE_QUESTION_TEMPLATE, code=code, key=asked[0])
        else:
            question = _fill(rng.choice(spec.question_templates), key=asked[0])
        answer = _fill(rng.choice(ANSWER_TEMPLATES), key=asked[0], value=asked[1])

        examples.append(RawExample(
            question=question,
            answer=answer,
            reviews=reviews,
            attributes=list(attributes),
        ))
    return examples


def split(records: List[RawExample], heldout_frac: float, seed: int):
    """Deterministic random split into (train, heldout)."""
    if not (0.0 <= heldout_frac < 1.0):
        raise ConfigError(f"heldout_frac must lie in [0, 1), got {heldout_frac}")
    order = list(range(len(records)))
    random.Random(seed).shuffle(order)
    n_held = int(round(len(records) * heldout_frac))
    held_idx = set(order[:n_held])
    train = [records[i] for i in range(len(records)) if i not in held_idx]
    held = [records[i] for i in range(len(records)) if i in held_idx]
    return train, held
