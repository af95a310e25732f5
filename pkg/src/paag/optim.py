"""Adagrad with global-norm gradient clipping.

The update for each parameter is

    acc    += grad ** 2
    param  -= lr * grad / (sqrt(acc) + eps)

with accumulators starting at zero, so the very first step moves by
roughly lr in the direction of -sign(grad). Accumulators never
decrease. ``step`` zeroes the grads it consumed, which keeps the
"backward accumulates" contract of the autodiff core explicit: anything
left in ``.grad`` at step time is intentional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from paag.autograd import Tensor
from paag.errors import ConfigError, ContractError


def global_grad_norm(params: Dict[str, Tensor]) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return math.sqrt(total)


def clip_grad_norm(params: Dict[str, Tensor], max_norm: float) -> float:
    """Scale grads so the joint L2 norm is at most max_norm; returns the
    pre-clip norm."""
    norm = global_grad_norm(params)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


def zero_grads(params: Dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


@dataclass
class AdagradState:
    """Per-parameter squared-gradient accumulators plus step settings."""

    lr: float
    eps: float = 1e-8
    accumulators: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ConfigError(f"adagrad: learning rate must be positive, got {self.lr}")
        if self.eps <= 0.0:
            raise ConfigError(f"adagrad: eps must be positive, got {self.eps}")

    def step(self, params: Dict[str, Tensor]) -> None:
        """Apply one update to every listed parameter, then zero grads."""
        for name, p in params.items():
            if p.grad is None:
                raise ContractError(f"adagrad: parameter {name!r} has no grad")
            acc = self.accumulators.get(name)
            if acc is None:
                acc = np.zeros(p.shape)
                self.accumulators[name] = acc
            g = p.grad
            acc += g * g
            p.data = p.data - self.lr * g / (np.sqrt(acc) + self.eps)
            p.grad = np.zeros(p.shape)
