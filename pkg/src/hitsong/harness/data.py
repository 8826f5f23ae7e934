"""Catalog / tag-file ingestion and in-memory datasets."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..audio import summarize_mean_std
from ..errors import DataValidationError
from ..models import TAG_DIM
from ..popularity import Song

log = logging.getLogger(__name__)

CATALOG_HEADER = ["song_id", "subset", "playcount", "listeners", "release_period"]
MAX_BAD_FRACTION = 0.01


@dataclass
class IngestReport:
    songs: list[Song]
    rejected: list[tuple[int, str]]


def ingest_catalog(path, max_bad_fraction: float = MAX_BAD_FRACTION) -> IngestReport:
    """Parse and validate a listening-log catalog CSV.

    Bad rows are excluded and reported as ``(line_number, reason)``. More than
    ``max_bad_fraction`` bad rows, a wrong header or a duplicate id is fatal.
    """
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"catalog not found: {path}")
    songs, rejected, seen = [], [], {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CATALOG_HEADER:
            raise DataValidationError(f"{path}: header must be {','.join(CATALOG_HEADER)}, got {header}")
        n_rows = 0
        for row in reader:
            lineno = reader.line_num
            if not row or not any(c.strip() for c in row):
                continue
            n_rows += 1
            if len(row) != len(CATALOG_HEADER):
                rejected.append((lineno, f"expected {len(CATALOG_HEADER)} fields, got {len(row)}"))
                continue
            sid, subset, pc, ls, rp = (c.strip() for c in row)
            if not sid or not subset:
                rejected.append((lineno, "empty song_id or subset"))
                continue
            try:
                pc, ls, rp = int(pc), int(ls), int(rp)
            except ValueError:
                rejected.append((lineno, "non-integer count or release_period"))
                continue
            if pc < 0 or ls < 0:
                rejected.append((lineno, "negative playcount or listeners"))
                continue
            if sid in seen:
                raise DataValidationError(
                    f"{path}: duplicate song_id '{sid}' on lines {seen[sid]} and {lineno}"
                )
            seen[sid] = lineno
            songs.append(Song(sid, subset, pc, ls, rp))
    for lineno, reason in rejected:
        log.warning("%s:%d rejected: %s", path, lineno, reason)
    if n_rows and len(rejected) / n_rows > max_bad_fraction:
        raise DataValidationError(
            f"{path}: {len(rejected)} of {n_rows} rows invalid (limit {max_bad_fraction:.0%}); "
            f"first: line {rejected[0][0]}: {rejected[0][1]}"
        )
    return IngestReport(songs, rejected)


def load_tag_file(path, dim: int = TAG_DIM) -> dict[str, np.ndarray]:
    """``song_id,t0..t{dim-1}`` CSV; values outside [0, 1] are clamped with a warning."""
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"tag file not found: {path}")
    expected = ["song_id"] + [f"t{i}" for i in range(dim)]
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != expected:
            raise DataValidationError(f"{path}: header must be song_id,t0,...,t{dim - 1}")
        for row in reader:
            if not row:
                continue
            if len(row) != dim + 1:
                raise DataValidationError(f"{path}:{reader.line_num}: expected {dim + 1} fields")
            try:
                vec = np.array([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DataValidationError(f"{path}:{reader.line_num}: non-numeric tag value") from exc
            if not np.all(np.isfinite(vec)):
                raise DataValidationError(f"{path}:{reader.line_num}: non-finite tag value")
            if vec.min() < 0 or vec.max() > 1:
                log.warning("%s:%d: tag values clamped to [0, 1]", path, reader.line_num)
                vec = np.clip(vec, 0.0, 1.0)
            out[row[0].strip()] = vec
    return out


@dataclass
class Dataset:
    """Features and targets for one subset, rows aligned with ``ids``."""

    name: str
    songs: list[Song]
    mel: np.ndarray | None  # (N, 1, n_mels, T)
    tags: np.ndarray | None  # (N, TAG_DIM)

    @property
    def ids(self) -> list[str]:
        return [s.song_id for s in self.songs]

    @property
    def hit_scores(self) -> np.ndarray:
        return np.array([s.hit_score for s in self.songs])

    def __len__(self):
        return len(self.songs)

    def features(self) -> dict[str, np.ndarray]:
        out = {}
        if self.mel is not None:
            out["mel"] = self.mel
            out["mean_std"] = np.stack([summarize_mean_std(m[0]) for m in self.mel])
        if self.tags is not None:
            out["tags"] = self.tags
        return out
