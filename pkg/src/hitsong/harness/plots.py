"""Plot-ready series: release-quarter bias, hit-score histograms, genre bars."""
from __future__ import annotations

import csv
import io
from pathlib import Path

from ..popularity import hit_score_histogram, sample_top_k, split_dataset, time_bias_report
from .experiment import _atomic_write, genre_csv, repetition_seeds


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def time_bias_rows(songs, sample_size: int | None):
    rows = []
    for subset in sorted({s.subset for s in songs}):
        sub = [s for s in songs if s.subset == subset]
        k = len(sub) if sample_size is None else min(sample_size, len(sub))
        for line, group in (("full", sub), ("sampled", sample_top_k(sub, k))):
            for r in time_bias_report(group):
                rows.append([subset, line, r.release_period, r.n_songs, f"{r.mean_log_playcount:.6f}"])
    return rows


def histogram_rows(songs, sample_size: int | None, seed: int, n_bins: int = 20, subsets=None):
    rows = []
    names = list(subsets) if subsets else sorted({s.subset for s in songs})
    for si, subset in enumerate(names):
        sub = [s for s in songs if s.subset == subset]
        if sample_size is not None:
            sub = sample_top_k(sub, min(sample_size, len(sub)))
        split = split_dataset(sub, seed=repetition_seeds(seed, si, 0)["split"])
        test_ids = set(split.test)
        for name, group in (("whole", sub), ("test", [s for s in sub if s.song_id in test_ids])):
            h = hit_score_histogram(group, n_bins)
            for lo, hi, c in zip(h.edges[:-1], h.edges[1:], h.counts):
                rows.append([subset, name, f"{lo:.6f}", f"{hi:.6f}", int(c)])
    return rows


def emit_plots(out_dir, songs=None, bundle=None, sample_size=None, seed=0, n_bins=20, subsets=None) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    if songs is not None:
        paths["time_bias"] = out / "fig1_time_bias.csv"
        _atomic_write(paths["time_bias"], _csv(time_bias_rows(songs, sample_size),
                                               ["subset", "line", "release_period", "n_songs", "mean_log_playcount"]))
        paths["histogram"] = out / "fig2_hit_scores.csv"
        _atomic_write(paths["histogram"], _csv(histogram_rows(songs, sample_size, seed, n_bins, subsets),
                                               ["subset", "set", "bin_lo", "bin_hi", "count"]))
    if bundle is not None:
        paths["genre"] = out / "fig4_genre.csv"
        _atomic_write(paths["genre"], genre_csv(bundle))
    return paths
