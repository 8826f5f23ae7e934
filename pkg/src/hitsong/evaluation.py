"""Ranking metrics for predicted hit scores.

Top-k sets order songs by descending score, breaking ties by ascending
song id (array position when no ids are given). Rank correlations that are
undefined (a constant score vector) are returned as ``None``.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import InputError

METRICS = ("recall", "ndcg", "kendall", "spearman")


def _check(true_scores, pred_scores, k=None):
    t = np.asarray(true_scores, dtype=np.float64).ravel()
    p = np.asarray(pred_scores, dtype=np.float64).ravel()
    if t.shape != p.shape:
        raise ValueError(f"score lists differ in length: {t.size} vs {p.size}")
    if k is not None and not 1 <= k <= t.size:
        raise ValueError(f"k={k} must be in [1, {t.size}]")
    return t, p


def ranking(scores, ids=None) -> np.ndarray:
    """Indices sorted by descending score, ties by ascending id."""
    scores = np.asarray(scores, dtype=np.float64)
    keys = np.arange(scores.size) if ids is None else np.asarray(ids)
    return np.lexsort((keys, -scores))


def recall_at_k(true_scores, pred_scores, k: int, ids=None) -> float:
    t, p = _check(true_scores, pred_scores, k)
    hits = set(ranking(t, ids)[:k].tolist())
    return sum(1 for i in ranking(p, ids)[:k].tolist() if i in hits) / k


def ndcg_at_k(true_scores, pred_scores, k: int, ids=None) -> float:
    """Binary relevance (membership of the true top-k), log2(rank + 1) discount."""
    t, p = _check(true_scores, pred_scores, k)
    relevant = np.zeros(t.size, dtype=bool)
    relevant[ranking(t, ids)[:k]] = True
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    dcg = float(np.sum(relevant[ranking(p, ids)[:k]] * discounts))
    return dcg / float(np.sum(discounts))


def _count_inversions(a: np.ndarray) -> int:
    """Strict inversions (i < j, a[i] > a[j]) by merge sort."""
    a = list(a)
    n = len(a)
    if n < 2:
        return 0
    buf = [0] * n
    inv = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid, hi = min(lo + width, n), min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    buf[k] = a[j]
                    inv += mid - i
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            buf[k:hi] = a[i:mid] if i < mid else a[j:hi]
        a, buf = buf, a
        width *= 2
    return inv


def _tied_pairs(sorted_vals) -> int:
    _, counts = np.unique(sorted_vals, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def kendall_tau(true_scores, pred_scores) -> float | None:
    """Tie-aware Kendall tau-b in O(n log n)."""
    x, y = _check(true_scores, pred_scores)
    n = x.size
    if n < 2:
        raise ValueError("kendall_tau needs at least 2 items")
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    n0 = n * (n - 1) // 2
    n1 = _tied_pairs(xs)
    n2 = _tied_pairs(ys)
    # pairs tied in both
    joint = np.unique(np.stack([xs, ys]), axis=1, return_counts=True)[1]
    n3 = int(np.sum(joint * (joint - 1) // 2))
    if n0 == n1 or n0 == n2:
        return None
    # with x sorted (ties by y), strict y-inversions are exactly the discordant pairs
    discordant = _count_inversions(ys)
    concordant = n0 - n1 - n2 + n3 - discordant
    return (concordant - discordant) / math.sqrt((n0 - n1) * (n0 - n2))


def spearman_rho(true_scores, pred_scores) -> float | None:
    """Pearson correlation of average ranks."""
    x, y = _check(true_scores, pred_scores)
    if x.size < 2:
        raise ValueError("spearman_rho needs at least 2 items")
    rx, ry = rankdata(x), rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(np.dot(rx, rx)) * float(np.dot(ry, ry)))
    if denom == 0.0:
        return None
    return float(np.dot(rx, ry)) / denom


@dataclass
class RankingReport:
    recall: float
    ndcg: float
    kendall: float | None
    spearman: float | None
    k: int
    n: int
    ids: list | None = None
    true_scores: list | None = None
    pred_scores: list | None = None
    undefined: dict = field(default_factory=dict)

    def metrics(self) -> dict:
        return {m: getattr(self, m) for m in METRICS}

    def to_dict(self, include_scores: bool = False) -> dict:
        d = {**self.metrics(), "k": self.k, "n": self.n}
        if self.undefined:
            d["undefined"] = dict(self.undefined)
        if include_scores and self.ids is not None:
            d["ids"] = list(self.ids)
            d["true_scores"] = list(self.true_scores)
            d["pred_scores"] = list(self.pred_scores)
        return d


def evaluate(true_scores, pred_scores, k: int, ids=None, keep_scores: bool = False) -> RankingReport:
    t, p = _check(true_scores, pred_scores, k)
    return RankingReport(
        recall=recall_at_k(t, p, k, ids),
        ndcg=ndcg_at_k(t, p, k, ids),
        kendall=kendall_tau(t, p),
        spearman=spearman_rho(t, p),
        k=k,
        n=t.size,
        ids=list(ids) if keep_scores and ids is not None else None,
        true_scores=t.tolist() if keep_scores else None,
        pred_scores=p.tolist() if keep_scores else None,
    )


def average_reports(reports: list[RankingReport]) -> RankingReport:
    """Per-metric mean. A metric undefined in any report stays undefined;
    ``undefined`` records how many reports lacked it."""
    if not reports:
        raise ValueError("no reports to average")
    k, n = reports[0].k, reports[0].n
    if any(r.k != k or r.n != n for r in reports):
        raise ValueError("cannot average reports with different k or n")
    values, undefined = {}, {}
    for m in METRICS:
        vals = [getattr(r, m) for r in reports]
        missing = sum(v is None for v in vals)
        if missing:
            undefined[m] = missing
            values[m] = None
        else:
            values[m] = float(np.mean(vals))
    return RankingReport(**values, k=k, n=n, undefined=undefined)


@dataclass(frozen=True)
class GenreDistribution:
    counts: dict
    m: int


def genre_distribution(tag_vectors, ranking_ids, m: int, tag_names=None, tag_indices=None) -> GenreDistribution:
    """Count the strongest tag (lowest index on ties) over the top-``m`` songs.

    ``tag_vectors`` maps song id to activations. ``tag_indices`` restricts the
    argmax to a subset of tags, e.g. the genre tags.
    """
    ranking_ids = list(ranking_ids)
    if m > len(ranking_ids):
        raise ValueError(f"m={m} exceeds ranking length {len(ranking_ids)}")
    counts = Counter()
    for sid in ranking_ids[:m]:
        if sid not in tag_vectors:
            raise InputError(f"no tag vector for song '{sid}'")
        vec = np.asarray(tag_vectors[sid], dtype=np.float64)
        cand = np.arange(vec.size) if tag_indices is None else np.asarray(tag_indices)
        best = int(cand[np.argmax(vec[cand])])
        counts[tag_names[best] if tag_names is not None else best] += 1
    return GenreDistribution(dict(sorted(counts.items(), key=lambda kv: (-kv[1], str(kv[0])))), m)
