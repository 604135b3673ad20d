"""Link prediction, triplet classification and the evaluation benchmark.

Link prediction ranks, for every fact ``(h, r, t)``, all entities ``e`` by the
score of ``(e, r, t)`` (head test) and of ``(h, r, e)`` (tail test). A rank
counts the candidates scoring strictly higher than the true entity, plus one,
so ties never hurt the target. In the filtered setting, candidates forming
another known fact are dropped before counting.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kg import FilterSet, KnowledgeGraph
from .models import Model

__all__ = [
    "LPMetrics",
    "ThresholdTable",
    "BenchReport",
    "MetricMismatchError",
    "rank_of",
    "link_prediction",
    "link_prediction_looped",
    "best_threshold",
    "fit_thresholds",
    "classify",
    "bench_eval",
    "bench_compare",
]

SIDES = ("head", "tail")


class MetricMismatchError(AssertionError):
    """Batched and looped evaluation disagreed."""


def rank_of(scores_row, true_idx: int, filter_mask=None) -> int:
    """Rank of ``true_idx`` in ``scores_row`` (1 is best).

    ``filter_mask[e]`` True removes candidate ``e`` from the competition; the
    target itself must not be masked.
    """
    scores = np.asarray(scores_row)
    greater = scores > scores[true_idx]
    if filter_mask is not None:
        mask = np.asarray(filter_mask, dtype=bool)
        if mask[true_idx]:
            raise ValueError("the target entity cannot be filtered")
        greater &= ~mask
    return 1 + int(greater.sum())


@dataclass
class LPMetrics:
    """Recovery ranks of a link-prediction run and the metrics derived from them."""

    ranks: dict[str, np.ndarray]  # keys "head_raw", "head_filt", "tail_raw", "tail_filt"
    k_values: tuple[int, ...] = (1, 3, 10)
    wall_time_s: float = 0.0

    @property
    def n_facts(self) -> int:
        return len(self.ranks["head_raw"])

    def _side_ranks(self, side: str, setting: str) -> np.ndarray:
        if side == "combined":
            return np.concatenate([self.ranks[f"head_{setting}"], self.ranks[f"tail_{setting}"]])
        return self.ranks[f"{side}_{setting}"]

    def summary(self, side: str = "combined") -> dict[str, float]:
        out = {}
        for setting in ("raw", "filt"):
            ranks = self._side_ranks(side, setting).astype(np.float64)
            out[f"mr_{setting}"] = float(ranks.mean())
            out[f"mrr_{setting}"] = float((1.0 / ranks).mean())
            for k in self.k_values:
                out[f"hits_{setting}.{k}"] = float((ranks <= k).mean())
        return out

    @property
    def mr_raw(self) -> float:
        return self.summary()["mr_raw"]

    @property
    def mr_filt(self) -> float:
        return self.summary()["mr_filt"]

    @property
    def mrr_raw(self) -> float:
        return self.summary()["mrr_raw"]

    @property
    def mrr_filt(self) -> float:
        return self.summary()["mrr_filt"]

    def hits(self, k: int, setting: str = "filt", side: str = "combined") -> float:
        return float((self._side_ranks(side, setting) <= k).mean())

    def same_ranks(self, other: "LPMetrics") -> bool:
        return all(np.array_equal(self.ranks[k], other.ranks[k]) for k in self.ranks)

    def to_dict(self, timing: bool = True) -> dict:
        doc = {"n_facts": self.n_facts, "k_values": list(self.k_values)}
        for side in ("combined",) + SIDES:
            doc[side] = self.summary(side)
        if timing:
            doc["wall_time_s"] = self.wall_time_s
        return doc


def _check_compatible(model: Model, kg: KnowledgeGraph, filt: FilterSet | None):
    if kg.n_ent != model.n_ent or kg.n_rel != model.n_rel:
        raise ValueError(
            f"graph dictionaries ({kg.n_ent} entities, {kg.n_rel} relations) do not match "
            f"the model ({model.n_ent}, {model.n_rel})"
        )
    if filt is not None and (filt.n_ent != model.n_ent or filt.n_rel != model.n_rel):
        raise ValueError("filter dictionaries do not match the model")
    if kg.n_facts == 0:
        raise ValueError("empty evaluation graph")


def _filtered_excess(scores, true_scores, known_per_row):
    """Per row, how many known-true candidates outscore the target."""
    lens = np.fromiter((len(k) for k in known_per_row), dtype=np.int64, count=len(known_per_row))
    if lens.sum() == 0:
        return np.zeros(len(scores), dtype=np.int64)
    rows = np.repeat(np.arange(len(scores)), lens)
    cols = np.concatenate(known_per_row)
    beaten = scores[rows, cols] > true_scores[rows]
    return np.bincount(rows[beaten], minlength=len(scores))


def _batch_ranks(model: Model, batch: np.ndarray, filt: FilterSet | None):
    prep = model.lp_prep_cands(batch)
    rows = np.arange(len(batch))
    out = {}
    for side in SIDES:
        scores = model.lp_score_all(prep, batch, side)
        col = 0 if side == "head" else 2
        true_scores = scores[rows, batch[:, col]]
        raw = 1 + (scores > true_scores[:, None]).sum(axis=1)
        if filt is None:
            filt_ranks = raw
        else:
            if side == "head":
                known = [filt.true_heads(r, t) for _, r, t in batch.tolist()]
            else:
                known = [filt.true_tails(h, r) for h, r, _ in batch.tolist()]
            filt_ranks = raw - _filtered_excess(scores, true_scores, known)
        out[f"{side}_raw"] = raw
        out[f"{side}_filt"] = filt_ranks
    return out


def link_prediction(
    model: Model,
    eval_kg: KnowledgeGraph,
    filter: FilterSet | None = None,
    batch_size: int = 256,
    k_values=(1, 3, 10),
    n_workers: int = 1,
) -> LPMetrics:
    """Batched link-prediction evaluation.

    Facts are processed ``batch_size`` at a time: candidate entities are
    prepared once per batch and all candidate scores of the batch come out
    of one call per side. With ``n_workers > 1`` batches run on a thread
    pool; ranks are reassembled in fact order, so results do not depend on
    the worker count or the batch size.
    """
    _check_compatible(model, eval_kg, filter)
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    start = time.perf_counter()
    triples = eval_kg.triples
    batches = [triples[i : i + batch_size] for i in range(0, len(triples), batch_size)]
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(lambda b: _batch_ranks(model, b, filter), batches))
    else:
        parts = [_batch_ranks(model, b, filter) for b in batches]
    ranks = {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}
    return LPMetrics(ranks, tuple(k_values), time.perf_counter() - start)


def link_prediction_looped(
    model: Model,
    eval_kg: KnowledgeGraph,
    filter: FilterSet | None = None,
    k_values=(1, 3, 10),
) -> LPMetrics:
    """Reference evaluation looping over facts: each test materializes its
    candidate triples and scores them with ``score_batch``."""
    _check_compatible(model, eval_kg, filter)
    start = time.perf_counter()
    n_ent = model.n_ent
    entities = np.arange(n_ent)
    ranks = {f"{s}_{k}": np.empty(eval_kg.n_facts, dtype=np.int64) for s in SIDES for k in ("raw", "filt")}
    for i, (h, r, t) in enumerate(eval_kg.triples.tolist()):
        for side in SIDES:
            cands = np.empty((n_ent, 3), dtype=np.int64)
            cands[:, 1] = r
            if side == "head":
                cands[:, 0], cands[:, 2], target = entities, t, h
            else:
                cands[:, 0], cands[:, 2], target = h, entities, t
            scores = model.score_batch(cands)
            ranks[f"{side}_raw"][i] = rank_of(scores, target)
            if filter is None:
                ranks[f"{side}_filt"][i] = ranks[f"{side}_raw"][i]
                continue
            mask = np.zeros(n_ent, dtype=bool)
            mask[filter.true_heads(r, t) if side == "head" else filter.true_tails(h, r)] = True
            mask[target] = False
            ranks[f"{side}_filt"][i] = rank_of(scores, target, mask)
    return LPMetrics(ranks, tuple(k_values), time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Triplet classification


@dataclass
class ThresholdTable:
    thresholds: dict[int, float]
    fallback: float
    accuracy: float = float("nan")  # validation accuracy under these thresholds
    relation_accuracy: dict[int, float] = field(default_factory=dict)

    def lookup(self, relations: np.ndarray) -> np.ndarray:
        return np.array([self.thresholds.get(r, self.fallback) for r in np.asarray(relations).tolist()])


def best_threshold(pos_scores, neg_scores) -> tuple[float, float]:
    """Accuracy-maximizing cut for "true iff score > threshold".

    Candidate cuts are the midpoints between adjacent distinct scores plus
    ``-inf`` and ``+inf``; among equally accurate cuts the lowest wins.
    Returns ``(threshold, accuracy)``.
    """
    pos = np.sort(np.asarray(pos_scores, dtype=np.float64))
    neg = np.sort(np.asarray(neg_scores, dtype=np.float64))
    total = len(pos) + len(neg)
    if total == 0:
        raise ValueError("no scores to fit a threshold on")
    distinct = np.unique(np.concatenate([pos, neg]))
    cuts = np.concatenate([[-np.inf], (distinct[:-1] + distinct[1:]) / 2.0, [np.inf]])
    correct = (len(pos) - np.searchsorted(pos, cuts, side="right")) + np.searchsorted(neg, cuts, side="right")
    best = int(np.argmax(correct))
    return float(cuts[best]), float(correct[best] / total)


def _triples(x) -> np.ndarray:
    return x.triples if isinstance(x, KnowledgeGraph) else np.asarray(x, dtype=np.int64)


def fit_thresholds(model: Model, valid_pos, valid_neg) -> ThresholdTable:
    """Fit one score threshold per relation on validation facts and their
    index-aligned corruptions."""
    pos, neg = _triples(valid_pos), _triples(valid_neg)
    if len(pos) == 0:
        raise ValueError("empty validation set")
    if len(neg) != len(pos):
        raise ValueError("negatives must be index-aligned with the positives")
    pos_s, neg_s = model.score_batch(pos), model.score_batch(neg)
    thresholds, rel_acc = {}, {}
    for r in np.unique(pos[:, 1]).tolist():
        thresholds[r], rel_acc[r] = best_threshold(pos_s[pos[:, 1] == r], neg_s[neg[:, 1] == r])
    fallback, _ = best_threshold(pos_s, neg_s)
    table = ThresholdTable(thresholds, fallback, relation_accuracy=rel_acc)
    table.accuracy = _accuracy(pos_s, pos[:, 1], neg_s, neg[:, 1], table)
    return table


def _accuracy(pos_s, pos_r, neg_s, neg_r, table: ThresholdTable) -> float:
    correct = (pos_s > table.lookup(pos_r)).sum() + (neg_s <= table.lookup(neg_r)).sum()
    return float(correct / (len(pos_s) + len(neg_s)))


def classify(model: Model, test_pos, test_neg, thresholds: ThresholdTable) -> float:
    """Accuracy of "true iff score > threshold of its relation" over the
    positives (label true) and negatives (label false)."""
    pos, neg = _triples(test_pos), _triples(test_neg)
    if len(pos) + len(neg) == 0:
        raise ValueError("empty test set")
    return _accuracy(model.score_batch(pos), pos[:, 1], model.score_batch(neg), neg[:, 1], thresholds)


# ---------------------------------------------------------------------------
# Benchmark


@dataclass
class BenchReport:
    mode: str
    times_s: list[float]
    n_facts: int
    metrics: LPMetrics
    speedup: float | None = None

    @property
    def mean_time_s(self) -> float:
        return float(np.mean(self.times_s))

    @property
    def facts_per_s(self) -> float:
        return self.n_facts / self.mean_time_s

    def to_dict(self) -> dict:
        doc = {
            "mode": self.mode,
            "repeats": len(self.times_s),
            "mean_time_s": self.mean_time_s,
            "facts_per_s": self.facts_per_s,
        }
        if self.speedup is not None:
            doc["speedup"] = self.speedup
        return doc


def bench_eval(
    model: Model,
    eval_kg: KnowledgeGraph,
    filter: FilterSet | None,
    batch_size: int = 256,
    mode: str = "batched",
    repeats: int = 1,
    k_values=(1, 3, 10),
    n_workers: int = 1,
) -> BenchReport:
    """Time ``repeats`` link-prediction runs in one mode; report the mean."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if mode not in ("batched", "looped"):
        raise ValueError(f"mode must be 'batched' or 'looped', got {mode!r}")
    times, metrics = [], None
    for _ in range(repeats):
        start = time.perf_counter()
        if mode == "batched":
            run = link_prediction(model, eval_kg, filter, batch_size, k_values, n_workers)
        else:
            run = link_prediction_looped(model, eval_kg, filter, k_values)
        times.append(time.perf_counter() - start)
        if metrics is not None and not metrics.same_ranks(run):
            raise MetricMismatchError(f"{mode} evaluation is not reproducible across repeats")
        metrics = run
    return BenchReport(mode, times, eval_kg.n_facts, metrics)


def bench_compare(
    model: Model,
    eval_kg: KnowledgeGraph,
    filter: FilterSet | None,
    batch_size: int = 256,
    repeats: int = 1,
    k_values=(1, 3, 10),
    n_workers: int = 1,
) -> tuple[BenchReport, BenchReport]:
    """Run both modes, require identical ranks, and set the batched report's
    ``speedup`` to looped time over batched time."""
    looped = bench_eval(model, eval_kg, filter, batch_size, "looped", repeats, k_values)
    batched = bench_eval(model, eval_kg, filter, batch_size, "batched", repeats, k_values, n_workers)
    if not batched.metrics.same_ranks(looped.metrics):
        raise MetricMismatchError("batched and looped link prediction disagree")
    batched.speedup = looped.mean_time_s / batched.mean_time_s
    return looped, batched
