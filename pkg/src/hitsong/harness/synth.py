"""Synthetic corpora with planted hit scores.

Each song has a log band-energy profile ``e`` in [-1, 1]^8 over octave bands
(in units of ``BAND_DB_SPAN`` dB). The audio is band-limited noise plus one
tone per band, scaled by the profile. Planted scores are

    linear:     h = a.e + noise
    nonlinear:  h = a.e + b * e[2] * e[5] + c * max(e) + noise

and tag vectors are a softmax over a fixed random projection of ``e``.
Catalog counts are chosen so that the catalog hit score tracks an affine
map of ``h`` up to integer rounding.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from ..audio import REFERENCE_SAMPLE_RATE, Waveform, write_wav
from ..models import TAG_DIM
from ..popularity import Song

N_BANDS = 8
BAND_DB_SPAN = 20.0
NONLINEAR_PRODUCT = 3.0
NONLINEAR_MAX = 3.0
TONE_RMS = 0.5
OUTPUT_GAIN = 0.02
SCORE_CENTER, SCORE_SCALE = 50.0, 8.0
PLANTED_MODELS = ("linear_band_energy", "nonlinear_band_interaction")
N_GENRE_TAGS = 10


@dataclass(frozen=True)
class SyntheticSpec:
    n_songs: int = 600
    seed: int = 0
    planted_model: str = "linear_band_energy"
    noise_sigma: float = 0.0
    clip_seconds: float = 3.0
    sample_rate: int = REFERENCE_SAMPLE_RATE
    subset: str = "synthetic"

    def __post_init__(self):
        if self.n_songs < 1:
            raise ValueError("n_songs must be >= 1")
        if self.planted_model not in PLANTED_MODELS:
            raise ValueError(f"planted_model must be one of {PLANTED_MODELS}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not self.clip_seconds > 0:
            raise ValueError("clip_seconds must be > 0")


def octave_edges(sample_rate: int = REFERENCE_SAMPLE_RATE) -> np.ndarray:
    """Nine edges, the top one at Nyquist, each band one octave wide."""
    return sample_rate / 2.0 * 2.0 ** np.arange(-N_BANDS, 1)


def tag_names(n: int = TAG_DIM) -> list[str]:
    return [f"tag{i:02d}" for i in range(n)]


def _counts_for_score(target: float, ratio: float) -> tuple[int, int]:
    """Integer (playcount, listeners) whose hit score is close to ``target``."""
    f = lambda u: u * math.log1p(math.expm1(u) / ratio) - target  # u = ln(1 + playcount)
    u = brentq(f, 1e-9, 60.0)
    playcount = max(1, round(math.expm1(u)))
    listeners = min(playcount, max(1, round(playcount / ratio)))
    return playcount, listeners


class SyntheticCorpus:
    """Planted corpus; waveforms are generated on demand from per-song streams."""

    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        rng = np.random.default_rng([spec.seed, 0])
        n = spec.n_songs
        self.coefficients = rng.normal(size=N_BANDS)
        self.band_energies = rng.uniform(-1.0, 1.0, size=(n, N_BANDS))
        e = self.band_energies
        h = e @ self.coefficients
        if spec.planted_model == "nonlinear_band_interaction":
            h = h + NONLINEAR_PRODUCT * e[:, 2] * e[:, 5] + NONLINEAR_MAX * e.max(axis=1)
        self.planted = h + spec.noise_sigma * rng.normal(size=n)

        proj = rng.normal(0.0, 1.5, size=(TAG_DIM, N_BANDS))
        logits = e @ proj.T
        logits -= logits.max(axis=1, keepdims=True)
        tags = np.exp(logits)
        self.tags = tags / tags.sum(axis=1, keepdims=True)

        self.ids = [f"song{i:05d}" for i in range(n)]
        z = (self.planted - self.planted.mean()) / (self.planted.std() or 1.0)
        targets = SCORE_CENTER + SCORE_SCALE * np.clip(z, -5.0, 5.0)
        ratios = rng.uniform(1.5, 4.0, size=n)
        periods = rng.integers(-4, 4, size=n)
        self.songs = []
        for sid, s, r, q in zip(self.ids, targets, ratios, periods):
            p, l = _counts_for_score(float(s), float(r))
            self.songs.append(Song(sid, spec.subset, p, l, int(q)))

    def __len__(self):
        return self.spec.n_songs

    def waveform(self, i: int) -> Waveform:
        spec = self.spec
        rng = np.random.default_rng([spec.seed, 1, i])
        n = int(round(spec.clip_seconds * spec.sample_rate))
        edges = octave_edges(spec.sample_rate)
        gains = 10.0 ** (BAND_DB_SPAN * self.band_energies[i] / 20.0)

        spectrum = np.fft.rfft(rng.normal(size=n))
        freqs = np.fft.rfftfreq(n, 1.0 / spec.sample_rate)
        band = np.searchsorted(edges, freqs, side="right") - 1
        shaping = np.zeros(freqs.size)
        for j in range(N_BANDS):
            inside = band == j
            frac = max(inside.sum(), 1) / freqs.size
            # unit-RMS noise per band, before gain
            shaping[inside] = gains[j] / math.sqrt(frac)
        noise = np.fft.irfft(spectrum * shaping, n)

        t = np.arange(n) / spec.sample_rate
        centres = np.sqrt(edges[:-1] * edges[1:])
        phases = rng.uniform(0.0, 2.0 * np.pi, size=N_BANDS)
        tones = (gains * TONE_RMS * math.sqrt(2.0))[:, None] * np.sin(
            2.0 * np.pi * centres[:, None] * t[None, :] + phases[:, None]
        )
        return Waveform(OUTPUT_GAIN * (noise + tones.sum(axis=0)), spec.sample_rate)

    def waveforms(self):
        for i in range(len(self)):
            yield self.ids[i], self.waveform(i)


def generate_synthetic(spec: SyntheticSpec) -> SyntheticCorpus:
    return SyntheticCorpus(spec)


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="")
    os.replace(tmp, path)


def catalog_csv(songs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["song_id", "subset", "playcount", "listeners", "release_period"])
    for s in songs:
        w.writerow([s.song_id, s.subset, s.playcount, s.listeners, s.release_period])
    return buf.getvalue()


def tags_csv(ids, tags) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["song_id"] + [f"t{i}" for i in range(tags.shape[1])])
    for sid, row in zip(ids, tags):
        w.writerow([sid] + [repr(float(v)) for v in row])
    return buf.getvalue()


def write_corpus(corpus: SyntheticCorpus, out_dir) -> dict[str, Path]:
    """Write clips, catalog, tag vectors, planted truth and a ready-made config."""
    out = Path(out_dir)
    audio_dir = out / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)
    for sid, w in corpus.waveforms():
        tmp = audio_dir / f"{sid}.wav.tmp"
        write_wav(tmp, w)
        os.replace(tmp, audio_dir / f"{sid}.wav")

    paths = {
        "audio_dir": audio_dir,
        "catalog": out / "catalog.csv",
        "tags": out / "tags.csv",
        "planted": out / "planted.csv",
        "config": out / "experiment.cfg",
    }
    _atomic_write_text(paths["catalog"], catalog_csv(corpus.songs))
    _atomic_write_text(paths["tags"], tags_csv(corpus.ids, corpus.tags))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["song_id"] + [f"e{j}" for j in range(N_BANDS)] + ["planted_score"])
    for sid, e, h in zip(corpus.ids, corpus.band_energies, corpus.planted):
        w.writerow([sid] + [repr(float(v)) for v in e] + [repr(float(h))])
    _atomic_write_text(paths["planted"], buf.getvalue())

    spec = corpus.spec
    cfg = "\n".join([
        "# generated by `hitsong synth`",
        *(f"synth_{k} = {v}" for k, v in asdict(spec).items()),
        f"catalog = {paths['catalog'].name}",
        f"audio_dir = {audio_dir.name}",
        "cache_dir = cache",
        f"tags = {paths['tags'].name}",
        f"subsets = {spec.subset}",
        f"segment_seconds = {spec.clip_seconds}",
        "",
    ])
    _atomic_write_text(paths["config"], cfg)
    return paths
