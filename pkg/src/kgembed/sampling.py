"""Negative samplers: one corrupted triple per positive fact.

Each sampler replaces either the head or the tail of every fact with a
different entity. They differ in how the side is chosen and where the
replacement comes from:

* ``uniform``: side with probability 1/2, replacement uniform over entities.
* ``bernoulli``: head corrupted with probability ``tph / (tph + hpt)`` of the
  fact's relation.
* ``positional``: side with probability 1/2, replacement drawn from entities
  seen in that position for the same relation; uniform over all entities
  when that set offers no alternative.

Negatives are not filtered against known facts.
"""

from __future__ import annotations

import numpy as np

from .kg import CorruptionStats, KnowledgeGraph, corruption_stats

__all__ = [
    "NegativeSampler",
    "UniformSampler",
    "BernoulliSampler",
    "PositionalSampler",
    "SAMPLER_KINDS",
    "make_sampler",
]


def _other_uniform(rng, current: np.ndarray, n_ent: int) -> np.ndarray:
    """Uniform draw over ``range(n_ent)`` minus ``current``, elementwise."""
    draw = rng.integers(0, n_ent - 1, size=len(current))
    return draw + (draw >= current)


class NegativeSampler:
    """Base sampler. Owns its generator, so one instance per worker."""

    kind = "base"

    def __init__(self, kg: KnowledgeGraph, seed: int = 0):
        self.n_ent = kg.n_ent
        self.rng = np.random.default_rng(seed)

    def _head_mask(self, rels: np.ndarray) -> np.ndarray:
        return self.rng.random(len(rels)) < 0.5

    def _require_alternatives(self):
        if self.n_ent < 2:
            raise ValueError("at least two entities are needed to corrupt a fact")

    def _replace(self, current, rels, head_side):
        return _other_uniform(self.rng, current, self.n_ent)

    def corrupt_batch(self, batch) -> np.ndarray:
        """Return an array of corrupted copies of ``batch`` (shape (n, 3))."""
        arr = np.asarray(batch, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != 3 or len(arr) == 0:
            raise ValueError("batch must be a non-empty (n, 3) array")
        self._require_alternatives()
        out = arr.copy()
        heads = self._head_mask(arr[:, 1])
        for col, mask in ((0, heads), (2, ~heads)):
            if mask.any():
                out[mask, col] = self._replace(arr[mask, col], arr[mask, 1], col == 0)
        return out

    def corrupt_kg(self, kg: KnowledgeGraph) -> np.ndarray:
        """Corrupt every fact of ``kg`` at once."""
        if kg.n_facts == 0:
            raise ValueError("empty graph")
        return self.corrupt_batch(kg.triples)


class UniformSampler(NegativeSampler):
    kind = "uniform"


class BernoulliSampler(NegativeSampler):
    kind = "bernoulli"

    def __init__(self, kg: KnowledgeGraph, seed: int = 0, stats: CorruptionStats | None = None):
        super().__init__(kg, seed)
        self.stats = stats if stats is not None else corruption_stats(kg)
        self.head_prob = self.stats.head_probability()

    def _head_mask(self, rels):
        return self.rng.random(len(rels)) < self.head_prob[rels]


class PositionalSampler(NegativeSampler):
    kind = "positional"

    def __init__(self, kg: KnowledgeGraph, seed: int = 0):
        super().__init__(kg, seed)
        # sorted entity arrays per relation for each position
        self.heads_of = [np.unique(kg.heads[kg.relations == r]) for r in range(kg.n_rel)]
        self.tails_of = [np.unique(kg.tails[kg.relations == r]) for r in range(kg.n_rel)]

    def _require_alternatives(self):
        # checked lazily: only the uniform fallback needs a second entity
        pass

    def _replace(self, current, rels, head_side):
        index = self.heads_of if head_side else self.tails_of
        out = np.empty_like(current)
        # relations visited in sorted order so draws are reproducible
        for rel in np.unique(rels).tolist():
            rows = np.flatnonzero(rels == rel)
            pool = index[rel]
            cur = current[rows]
            pos = np.searchsorted(pool, cur)
            if len(pool):
                present = (pos < len(pool)) & (pool[np.minimum(pos, len(pool) - 1)] == cur)
            else:
                present = np.zeros(len(rows), dtype=bool)
            size = len(pool) - present
            ok = size > 0
            if ok.any():
                draw = self.rng.integers(0, size[ok])
                # skip over the current entity's slot in the pool
                draw += present[ok] & (draw >= pos[ok])
                out[rows[ok]] = pool[draw]
            if (~ok).any():
                super()._require_alternatives()
                out[rows[~ok]] = _other_uniform(self.rng, cur[~ok], self.n_ent)
        return out


SAMPLER_KINDS = {
    cls.kind: cls for cls in (UniformSampler, BernoulliSampler, PositionalSampler)
}


def make_sampler(kind: str, kg: KnowledgeGraph, seed: int = 0) -> NegativeSampler:
    try:
        cls = SAMPLER_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown sampler {kind!r}; expected one of {sorted(SAMPLER_KINDS)}") from None
    return cls(kg, seed)
