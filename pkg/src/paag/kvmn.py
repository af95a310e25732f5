"""Key-value attribute memory.

Attribute keys are matched against the question's final state through a
bilinear form; the resulting distribution mixes the value embeddings
into a single readout vector. Keys and values share the main token
embedding. An example with no attributes reads out an exact zero
vector, and its (empty) match distribution is reported as such rather
than invented.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from paag import autograd as ag
from paag.autograd import Tensor
from paag.encoders import Embedding
from paag.errors import MaskError


@dataclass
class MemoryReadout:
    scores: Tensor    # (A,) match distribution, empty for no attributes
    vector: Tensor    # (E,) mixed value embedding


class AttributeMemory:
    def __init__(self, embedding: Embedding, key_transform: Tensor):
        self.embedding = embedding
        self.key_transform = key_transform  # (2h, E)

    def read(self, attributes: np.ndarray, q_final: Tensor,
             mask: Optional[np.ndarray] = None) -> MemoryReadout:
        """``attributes`` is an (A, 2) array of key and value token ids."""
        attributes = np.asarray(attributes, dtype=np.int64)
        dim = self.embedding.dim
        n = attributes.shape[0]
        if mask is None:
            mask = np.ones(n, dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (n,):
            raise MaskError(f"memory: mask shape {mask.shape} does not match {n} rows")
        if n == 0 or not mask.any():
            return MemoryReadout(scores=ag.zeros((0,)), vector=ag.zeros((dim,)))
        keys = self.embedding(attributes[:, 0])      # (A, E)
        values = self.embedding(attributes[:, 1])    # (A, E)
        probe = ag.matmul(q_final, self.key_transform)   # (E,)
        scores = ag.softmax(ag.matmul(keys, probe), mask=mask)
        vector = ag.matmul(scores, values)
        return MemoryReadout(scores=scores, vector=vector)
