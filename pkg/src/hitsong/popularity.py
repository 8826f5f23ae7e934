"""Regression targets and dataset construction from listening-log catalogs."""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Song:
    song_id: str
    subset: str
    playcount: int
    listeners: int
    release_period: int

    def __post_init__(self):
        if self.playcount < 0 or self.listeners < 0:
            raise ValueError(f"{self.song_id}: counts must be non-negative")
        if self.listeners > self.playcount > 0 or (self.playcount == 0 and self.listeners > 0):
            log.warning("%s: %d listeners but only %d plays", self.song_id, self.listeners, self.playcount)

    @property
    def hit_score(self) -> float:
        return hit_score(self.playcount, self.listeners)


def hit_score(playcount, listeners) -> float:
    """``ln(1 + playcount) * ln(1 + listeners)``."""
    if playcount < 0 or listeners < 0:
        raise ValueError("counts must be non-negative")
    return math.log1p(playcount) * math.log1p(listeners)


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]
    seed: int

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)


def sample_top_k(catalog: list[Song], k: int) -> list[Song]:
    """The ``k`` most-played songs; equal playcounts go to the smaller song_id."""
    if k > len(catalog):
        raise ValueError(f"catalog has {len(catalog)} songs, cannot sample {k}")
    if k < 0:
        raise ValueError("k must be non-negative")
    return sorted(catalog, key=lambda s: (-s.playcount, s.song_id))[:k]


def split_dataset(songs: list[Song], ratios=(8, 1, 1), seed: int = 0) -> DatasetSplit:
    """Seeded random partition; val/test get ``floor`` of their share, train the rest."""
    n = len(songs)
    if n < 3:
        raise ValueError(f"need at least 3 songs to split, got {n}")
    total = sum(ratios)
    n_val = max(1, n * ratios[1] // total)
    n_test = max(1, n * ratios[2] // total)
    ids = np.array(sorted(s.song_id for s in songs), dtype=object)
    order = np.random.default_rng(seed).permutation(n)
    shuffled = ids[order]
    test = tuple(sorted(shuffled[:n_test]))
    val = tuple(sorted(shuffled[n_test:n_test + n_val]))
    train = tuple(sorted(shuffled[n_test + n_val:]))
    return DatasetSplit(train, val, test, seed)


@dataclass(frozen=True)
class QuarterRow:
    release_period: int
    n_songs: int
    mean_log_playcount: float


def time_bias_report(songs: list[Song]) -> list[QuarterRow]:
    """Mean ``ln(1 + playcount)`` per release quarter; empty quarters are omitted."""
    groups = defaultdict(list)
    for s in songs:
        groups[s.release_period].append(math.log1p(s.playcount))
    return [QuarterRow(q, len(v), float(np.mean(v))) for q, v in sorted(groups.items())]


def time_bias_tables(catalog: list[Song], k: int) -> dict[str, list[QuarterRow]]:
    """Report for the full catalog and for its top-``k`` sample."""
    return {"full": time_bias_report(catalog), "sampled": time_bias_report(sample_top_k(catalog, k))}


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray


def hit_score_histogram(songs, n_bins: int) -> Histogram:
    """Equal-width bins over ``[min, max]`` of the hit scores.

    Accepts songs or raw scores.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    scores = np.array([s.hit_score if isinstance(s, Song) else float(s) for s in songs])
    if scores.size == 0:
        return Histogram(np.zeros(n_bins + 1), np.zeros(n_bins, dtype=int))
    lo, hi = float(scores.min()), float(scores.max())
    if lo == hi:
        edges = np.linspace(lo, lo + 1.0, n_bins + 1)
        counts = np.zeros(n_bins, dtype=int)
        counts[0] = scores.size
        return Histogram(edges, counts)
    counts, edges = np.histogram(scores, bins=n_bins, range=(lo, hi))
    return Histogram(edges, counts)
