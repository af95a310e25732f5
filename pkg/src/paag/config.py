"""Flat key-value run configuration.

The on-disk format is one ``key = value`` per line, ``#`` comments and
blank lines ignored. ``serialize(parse(text))`` is canonical: fields
appear in declaration order with repr-round-trip values, so configs can
be compared byte-wise.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from typing import Tuple

from paag.errors import ConfigError
from paag.model import VARIANTS, variant_is_wasserstein, variant_uses_critic, variant_uses_penalty

ADVERSARIAL_OBJECTIVES = ("minimax", "nonsaturating")


@dataclass
class RunConfig:
    variant: str = "PAAG"
    hidden_size: int = 32
    embedding_size: int = 32
    vocab_size: int = 2000
    batch_size: int = 16
    learning_rate: float = 0.1
    # The critic takes Adagrad sign-sized first steps like everything
    # else; at the generator's rate an unconstrained score blows up in
    # a handful of updates, so it gets its own, slower schedule.
    critic_lr: float = 0.02
    adagrad_eps: float = 1e-8
    grad_clip: float = 5.0
    epochs: int = 10
    warmup_epochs: int = 2
    critic_iters: int = 1
    gp_lambda: float = 10.0
    adv_weight: float = 0.1
    vanilla_objective: str = "minimax"
    beam_size: int = 4
    max_answer_len: int = 20
    seed: int = 0
    attend_review_words: bool = False
    per_step_critic: bool = False
    critic_filters: int = 16
    critic_widths: str = "1,2,3"
    critic_proj: int = 32
    train_path: str = ""
    eval_path: str = ""
    out_dir: str = "runs/paag"
    synth_products: int = 64
    synth_attributes: int = 5
    synth_reviews: int = 3
    synth_noise: float = 0.0
    synth_vocab: int = 150
    heldout_frac: float = 0.2

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.vanilla_objective not in ADVERSARIAL_OBJECTIVES:
            raise ConfigError(
                f"vanilla_objective must be one of {ADVERSARIAL_OBJECTIVES}, "
                f"got {self.vanilla_objective!r}")
        positive = ("hidden_size", "embedding_size", "vocab_size", "batch_size",
                    "epochs", "beam_size", "max_answer_len", "critic_iters",
                    "critic_filters", "critic_proj")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        for name in ("learning_rate", "critic_lr", "grad_clip", "adagrad_eps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("gp_lambda", "adv_weight", "synth_noise", "heldout_frac"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.warmup_epochs < 0:
            raise ConfigError(f"warmup_epochs must be non-negative, got {self.warmup_epochs}")
        self.parsed_critic_widths()

    def parsed_critic_widths(self) -> Tuple[int, ...]:
        try:
            widths = tuple(int(part) for part in self.critic_widths.split(","))
        except ValueError as exc:
            raise ConfigError(f"critic_widths: {self.critic_widths!r} is not a "
                              f"comma-separated list of integers") from exc
        if not widths or any(w < 1 for w in widths):
            raise ConfigError(f"critic_widths must be positive, got {widths}")
        return widths

    # The variant fully determines the adversarial recipe.
    @property
    def uses_critic(self) -> bool:
        return variant_uses_critic(self.variant)

    @property
    def wasserstein(self) -> bool:
        return variant_is_wasserstein(self.variant)

    @property
    def gradient_penalty(self) -> bool:
        return variant_uses_penalty(self.variant)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _parse_value(field_type, raw: str, key: str):
    if field_type is bool:
        lowered = raw.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return field_type(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {field_type.__name__}") from exc


def parse(text: str) -> RunConfig:
    known = {f.name: f.type for f in fields(RunConfig)}
    types = {"int": int, "float": float, "str": str, "bool": bool}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        field_type = known[key]
        if isinstance(field_type, str):
            field_type = types[field_type]
        values[key] = _parse_value(field_type, raw, key)
    config = RunConfig(**values)
    config.validate()
    return config


def serialize(config: RunConfig) -> str:
    lines = [f"{f.name} = {_format_value(getattr(config, f.name))}"
             for f in fields(RunConfig)]
    return "\n".join(lines) + "\n"


def load(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read())


def save(path, config: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(config))
