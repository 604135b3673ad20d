"""In-memory knowledge graphs: loading, splitting, filtering and statistics.

Triples are stored column-wise as an ``(n, 3)`` int64 array whose columns are
``head, relation, tail``.  Graphs produced by splitting (or loaded together)
share their entity and relation dictionaries, so indices are comparable
between them.
"""

from __future__ import annotations

import warnings
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "KnowledgeGraph",
    "TripleFormatError",
    "UnknownLabelError",
    "CorruptionStats",
    "FilterSet",
    "RedundancyReport",
    "parse_triples",
    "load_triples",
    "load_splits",
    "write_triples",
    "split_kg",
    "corruption_stats",
    "build_filter",
    "redundancy_metrics",
]


class TripleFormatError(ValueError):
    """Raised when a triple file cannot be parsed."""


class UnknownLabelError(KeyError):
    """Raised when a label is missing from a fixed dictionary."""

    def __init__(self, label: str, kind: str):
        super().__init__(f"unknown {kind} label {label!r}")
        self.label = label
        self.kind = kind

    def __str__(self) -> str:
        return self.args[0]


def _as_triple_array(triples) -> np.ndarray:
    arr = np.asarray(triples, dtype=np.int64)
    if arr.size == 0:
        return np.empty((0, 3), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"triples must have shape (n, 3), got {arr.shape}")
    return arr


class KnowledgeGraph:
    """A set of ``(head, relation, tail)`` facts over labelled entities.

    Parameters
    ----------
    triples: array-like of shape (n, 3)
        Integer triples ``(h, r, t)``.
    ent_dict, rel_dict: dict
        Label to index bijections. Indices must be ``0..len-1``.

    The triple array is read-only; every graph is immutable once built.
    """

    def __init__(self, triples, ent_dict: dict[str, int], rel_dict: dict[str, int]):
        arr = _as_triple_array(triples).copy()
        self.ent_dict = dict(ent_dict)
        self.rel_dict = dict(rel_dict)
        self.n_ent = len(self.ent_dict)
        self.n_rel = len(self.rel_dict)
        if sorted(self.ent_dict.values()) != list(range(self.n_ent)):
            raise ValueError("ent_dict must map onto 0..n_ent-1")
        if sorted(self.rel_dict.values()) != list(range(self.n_rel)):
            raise ValueError("rel_dict must map onto 0..n_rel-1")
        if len(arr):
            if arr.min() < 0:
                raise IndexError("negative index in triples")
            if arr[:, [0, 2]].max() >= self.n_ent:
                raise IndexError("entity index out of range")
            if arr[:, 1].max() >= self.n_rel:
                raise IndexError("relation index out of range")
            if len(np.unique(self._keys(arr))) != len(arr):
                raise ValueError("duplicate triples")
        arr.setflags(write=False)
        self.triples = arr
        self._ent_labels = None
        self._rel_labels = None

    @classmethod
    def from_indices(cls, triples, n_ent: int, n_rel: int) -> "KnowledgeGraph":
        """Build a graph with synthetic labels ``e<i>`` / ``r<j>``."""
        ent = {f"e{i}": i for i in range(n_ent)}
        rel = {f"r{j}": j for j in range(n_rel)}
        return cls(triples, ent, rel)

    def with_triples(self, triples) -> "KnowledgeGraph":
        """Return a graph over the same dictionaries holding ``triples``."""
        return KnowledgeGraph(triples, self.ent_dict, self.rel_dict)

    def _keys(self, arr: np.ndarray) -> np.ndarray:
        return (arr[:, 0] * self.n_rel + arr[:, 1]) * self.n_ent + arr[:, 2]

    def __len__(self) -> int:
        return len(self.triples)

    @property
    def n_facts(self) -> int:
        return len(self.triples)

    @property
    def heads(self) -> np.ndarray:
        return self.triples[:, 0]

    @property
    def relations(self) -> np.ndarray:
        return self.triples[:, 1]

    @property
    def tails(self) -> np.ndarray:
        return self.triples[:, 2]

    @property
    def ent_labels(self) -> list[str]:
        if self._ent_labels is None:
            self._ent_labels = sorted(self.ent_dict, key=self.ent_dict.__getitem__)
        return self._ent_labels

    @property
    def rel_labels(self) -> list[str]:
        if self._rel_labels is None:
            self._rel_labels = sorted(self.rel_dict, key=self.rel_dict.__getitem__)
        return self._rel_labels

    def shares_dictionaries(self, other: "KnowledgeGraph") -> bool:
        return self.ent_dict == other.ent_dict and self.rel_dict == other.rel_dict

    def __eq__(self, other) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return self.shares_dictionaries(other) and np.array_equal(self.triples, other.triples)

    def __repr__(self) -> str:
        return f"KnowledgeGraph(n_ent={self.n_ent}, n_rel={self.n_rel}, n_facts={self.n_facts})"


# ---------------------------------------------------------------------------
# I/O


def _parse_lines(text: str, ent_dict, rel_dict, grow: bool, origin: str = "<input>"):
    rows = []
    seen = set()

    def index(table, label, kind):
        idx = table.get(label)
        if idx is None:
            if not grow:
                raise UnknownLabelError(label, kind)
            idx = table[label] = len(table)
        return idx

    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise TripleFormatError(
                f"{origin}: line {lineno}: expected 3 tab-separated fields, got {len(fields)}"
            )
        h = index(ent_dict, fields[0], "entity")
        r = index(rel_dict, fields[1], "relation")
        t = index(ent_dict, fields[2], "entity")
        if (h, r, t) not in seen:
            seen.add((h, r, t))
            rows.append((h, r, t))
    return rows


def parse_triples(
    text: str,
    ent_dict: dict[str, int] | None = None,
    rel_dict: dict[str, int] | None = None,
) -> KnowledgeGraph:
    """Parse tab-separated ``head relation tail`` lines into a graph.

    Without dictionaries, labels are indexed in order of first appearance.
    With dictionaries, they are used as-is and any unseen label raises
    :class:`UnknownLabelError`. Duplicate lines collapse to one triple.
    """
    if (ent_dict is None) != (rel_dict is None):
        raise ValueError("pass both dictionaries or neither")
    fixed = ent_dict is not None
    ents = dict(ent_dict) if fixed else {}
    rels = dict(rel_dict) if fixed else {}
    rows = _parse_lines(text, ents, rels, grow=not fixed)
    if not rows:
        raise TripleFormatError("no triples")
    return KnowledgeGraph(rows, ents, rels)


def load_triples(path, ent_dict=None, rel_dict=None) -> KnowledgeGraph:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        return parse_triples(text, ent_dict, rel_dict)
    except TripleFormatError as exc:
        raise TripleFormatError(f"{path}: {exc}") from None


def load_splits(paths: Sequence) -> list[KnowledgeGraph]:
    """Load several triple files over one shared pair of dictionaries.

    Labels are indexed by first appearance across the files in the given
    order, so the first file alone reproduces :func:`load_triples` indexing.
    """
    ents: dict[str, int] = {}
    rels: dict[str, int] = {}
    per_file = []
    for path in paths:
        path = Path(path)
        rows = _parse_lines(path.read_text(encoding="utf-8"), ents, rels, True, str(path))
        if not rows:
            raise TripleFormatError(f"{path}: no triples")
        per_file.append(rows)
    return [KnowledgeGraph(rows, ents, rels) for rows in per_file]


def format_triples(kg: KnowledgeGraph) -> str:
    ents, rels = kg.ent_labels, kg.rel_labels
    return "".join(f"{ents[h]}\t{rels[r]}\t{ents[t]}\n" for h, r, t in kg.triples.tolist())


def write_triples(kg: KnowledgeGraph, path) -> None:
    Path(path).write_text(format_triples(kg), encoding="utf-8")


# ---------------------------------------------------------------------------
# Splitting


def split_kg(
    kg: KnowledgeGraph,
    share_train: float = 0.8,
    with_validation: bool = False,
    seed: int = 0,
):
    """Split ``kg`` into train / (valid) / test graphs.

    Every entity and relation of ``kg`` that appears in at least one triple
    ends up in at least one train triple. Triples are shuffled with ``seed``;
    a first pass sends to train each triple introducing an entity or relation
    not yet covered, a second pass tops train up to ``share_train`` of the
    facts. The rest is the test set, or is halved between validation (rounded
    down) and test.

    Returns ``(train, test)`` or ``(train, valid, test)``.
    """
    if not 0.0 < share_train < 1.0:
        raise ValueError("share_train must lie in (0, 1)")
    n = kg.n_facts
    if n == 0:
        raise ValueError("cannot split an empty graph")

    order = np.random.default_rng(seed).permutation(n)
    triples = kg.triples
    in_train = np.zeros(n, dtype=bool)
    ent_seen = np.zeros(kg.n_ent, dtype=bool)
    rel_seen = np.zeros(kg.n_rel, dtype=bool)
    for i in order.tolist():
        h, r, t = triples[i]
        if not (ent_seen[h] and ent_seen[t] and rel_seen[r]):
            in_train[i] = True
            ent_seen[h] = ent_seen[t] = rel_seen[r] = True

    budget = int(share_train * n)
    forced = int(in_train.sum())
    if forced > budget:
        warnings.warn(
            f"covering every entity and relation needs {forced} train facts, "
            f"more than the requested {budget}; train set enlarged",
            stacklevel=2,
        )
    else:
        for i in order[~in_train[order]][: budget - forced]:
            in_train[i] = True

    rest = order[~in_train[order]]
    train = kg.with_triples(triples[in_train])
    if not with_validation:
        return train, kg.with_triples(triples[np.sort(rest)])
    n_valid = len(rest) // 2
    valid = kg.with_triples(triples[np.sort(rest[:n_valid])])
    test = kg.with_triples(triples[np.sort(rest[n_valid:])])
    return train, valid, test


# ---------------------------------------------------------------------------
# Statistics and filtering


@dataclass(frozen=True)
class CorruptionStats:
    """Per-relation mean tails-per-head (``tph``) and heads-per-tail (``hpt``)."""

    tph: np.ndarray
    hpt: np.ndarray

    def head_probability(self) -> np.ndarray:
        """Probability of corrupting the head, per relation."""
        return self.tph / (self.tph + self.hpt)


def corruption_stats(kg: KnowledgeGraph) -> CorruptionStats:
    if kg.n_facts == 0:
        raise ValueError("empty graph")
    h, r, t = kg.heads, kg.relations, kg.tails
    facts = np.bincount(r, minlength=kg.n_rel).astype(np.float64)
    hr = np.unique(np.stack([r, h], axis=1), axis=0)
    rt = np.unique(np.stack([r, t], axis=1), axis=0)
    n_heads = np.bincount(hr[:, 0], minlength=kg.n_rel).astype(np.float64)
    n_tails = np.bincount(rt[:, 0], minlength=kg.n_rel).astype(np.float64)
    tph = np.ones(kg.n_rel)
    hpt = np.ones(kg.n_rel)
    present = facts > 0
    tph[present] = facts[present] / n_heads[present]
    hpt[present] = facts[present] / n_tails[present]
    return CorruptionStats(tph=tph, hpt=hpt)


class FilterSet:
    """Membership structure over known true triples.

    Besides ``contains``, it answers "which tails complete ``(h, r, ?)``" and
    "which heads complete ``(?, r, t)``", which is what filtered ranking needs.
    """

    def __init__(self, triples, n_ent: int, n_rel: int):
        arr = _as_triple_array(triples)
        self.n_ent = n_ent
        self.n_rel = n_rel
        keys = (arr[:, 0] * n_rel + arr[:, 1]) * n_ent + arr[:, 2]
        self._keys = np.unique(keys)
        tails = defaultdict(list)
        heads = defaultdict(list)
        for h, r, t in np.unique(arr, axis=0).tolist() if len(arr) else []:
            tails[(h, r)].append(t)
            heads[(r, t)].append(h)
        self._tails = {k: np.array(v, dtype=np.int64) for k, v in tails.items()}
        self._heads = {k: np.array(v, dtype=np.int64) for k, v in heads.items()}

    def __len__(self) -> int:
        return len(self._keys)

    def contains(self, triple) -> bool:
        h, r, t = (int(x) for x in triple)
        key = (h * self.n_rel + r) * self.n_ent + t
        pos = np.searchsorted(self._keys, key)
        return bool(pos < len(self._keys) and self._keys[pos] == key)

    __contains__ = contains

    def true_tails(self, h: int, r: int) -> np.ndarray:
        return self._tails.get((h, r), _EMPTY)

    def true_heads(self, r: int, t: int) -> np.ndarray:
        return self._heads.get((r, t), _EMPTY)


_EMPTY = np.empty(0, dtype=np.int64)
_EMPTY.setflags(write=False)


def build_filter(graphs: Iterable[KnowledgeGraph]) -> FilterSet:
    graphs = list(graphs)
    if not graphs:
        raise ValueError("at least one graph is required")
    first = graphs[0]
    for g in graphs[1:]:
        if not g.shares_dictionaries(first):
            raise ValueError("graphs do not share dictionaries")
    triples = np.concatenate([g.triples for g in graphs], axis=0)
    return FilterSet(triples, first.n_ent, first.n_rel)


# ---------------------------------------------------------------------------
# Redundancy


@dataclass(frozen=True)
class RedundancyReport:
    """Share of triples duplicated by another relation or reversed by some relation.

    ``duplicate_fraction``: triples (h, r, t) such that (h, r', t) holds for
    some r' != r. ``reverse_duplicate_fraction``: triples (h, r, t) such that
    (t, r', h) holds for some r', the triple itself excluded (self-loops do
    not count as their own reverse).
    """

    duplicate_fraction: float
    reverse_duplicate_fraction: float


def redundancy_metrics(kg: KnowledgeGraph) -> RedundancyReport:
    if kg.n_facts == 0:
        raise ValueError("empty graph")
    rels_by_pair: dict[tuple[int, int], set[int]] = defaultdict(set)
    for h, r, t in kg.triples.tolist():
        rels_by_pair[(h, t)].add(r)
    dup = rev = 0
    for h, r, t in kg.triples.tolist():
        if len(rels_by_pair[(h, t)]) > 1:
            dup += 1
        back = rels_by_pair.get((t, h), ())
        if h != t and back or h == t and len(back) > 1:
            rev += 1
    n = kg.n_facts
    return RedundancyReport(dup / n, rev / n)
