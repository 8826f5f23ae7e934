"""Per-song spectrogram cache with a digest manifest.

Layout under ``cache_dir``::

    <song_id>.f32         little-endian float32, (n_mels, n_frames) row-major
    <song_id>.f32.json    sidecar {song_id, n_mels, n_frames, params}
    manifest.json         song_id -> file, audio and content digests, params

A song is recomputed only when its audio digest, the extraction params or
the cached file's digest no longer match the manifest.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..audio import ExtractionParams, load_spectrogram, read_wav, save_spectrogram, song_log_mel
from ..errors import DataValidationError

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class CacheResult:
    manifest: dict
    computed: list[str] = field(default_factory=list)
    reused: list[str] = field(default_factory=list)
    skipped: dict[str, str] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)


def read_manifest(cache_dir) -> dict:
    path = Path(cache_dir) / MANIFEST
    if not path.exists():
        return {"entries": {}}
    return json.loads(path.read_text())


def _write_json_atomic(path: Path, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, sort_keys=True, indent=1))
    os.replace(tmp, path)


def build_feature_cache(song_ids, audio_dir, cache_dir, params: ExtractionParams) -> CacheResult:
    audio_dir, cache_dir = Path(audio_dir), Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    old = read_manifest(cache_dir).get("entries", {})
    pdict = params.to_dict()
    entries = {}
    result = CacheResult(manifest={})
    for sid in song_ids:
        wav = audio_dir / f"{sid}.wav"
        if not wav.exists():
            result.skipped[sid] = f"missing audio {wav.name}"
            continue
        audio_digest = file_digest(wav)
        target = cache_dir / f"{sid}.f32"
        prev = old.get(sid)
        if (
            prev is not None
            and prev.get("audio_digest") == audio_digest
            and prev.get("params") == pdict
            and target.exists()
            and file_digest(target) == prev.get("digest")
        ):
            entries[sid] = prev
            result.reused.append(sid)
            continue
        try:
            mel = song_log_mel(read_wav(wav, params.sample_rate), params)
        except DataValidationError as exc:
            result.errors[sid] = str(exc)
            continue
        tmp = cache_dir / f"{sid}.f32.tmp"
        sidecar_tmp = save_spectrogram(tmp, mel, sid)
        os.replace(sidecar_tmp, cache_dir / f"{sid}.f32.json")
        os.replace(tmp, target)
        entries[sid] = {
            "file": target.name,
            "audio_digest": audio_digest,
            "digest": file_digest(target),
            "n_frames": mel.n_frames,
            "params": pdict,
        }
        result.computed.append(sid)
    manifest = {"params": pdict, "entries": dict(sorted(entries.items()))}
    _write_json_atomic(cache_dir / MANIFEST, manifest)
    result.manifest = manifest
    for sid, why in result.skipped.items():
        log.warning("skipped %s: %s", sid, why)
    for sid, why in result.errors.items():
        log.error("failed %s: %s", sid, why)
    return result


def load_cached_mels(cache_dir, song_ids) -> tuple[dict[str, np.ndarray], list[str]]:
    """Spectrograms for the ids present in the manifest, plus the missing ids."""
    cache_dir = Path(cache_dir)
    entries = read_manifest(cache_dir).get("entries", {})
    found, missing = {}, []
    for sid in song_ids:
        entry = entries.get(sid)
        if entry is None or not (cache_dir / entry["file"]).exists():
            missing.append(sid)
            continue
        mel, _ = load_spectrogram(cache_dir / entry["file"])
        found[sid] = mel.bins
    return found, missing
