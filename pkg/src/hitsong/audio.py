"""Log-mel front end: middle-segment cropping, centered STFT, HTK mel
filterbank and the mean/std summary used by the linear baseline.

Spectrograms are stored as ``(n_mels, n_frames)`` float64 arrays.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.io import wavfile

from .errors import DataValidationError

REFERENCE_SAMPLE_RATE = 22050


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))

    def __len__(self):
        return len(self.samples)

    @property
    def seconds(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class ExtractionParams:
    window_size: int = 4096
    hop: int = 2048
    n_mels: int = 128
    sample_rate: int = REFERENCE_SAMPLE_RATE
    segment_seconds: float = 60.0
    log_offset: float = 1e-6

    def __post_init__(self):
        if self.window_size < 2 or self.hop < 1 or self.n_mels < 1:
            raise ValueError("window_size, hop and n_mels must be positive")
        if self.sample_rate <= 0 or self.segment_seconds <= 0:
            raise ValueError("sample_rate and segment_seconds must be positive")
        if not self.log_offset > 0:
            raise ValueError("log_offset must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MelSpectrogram:
    bins: np.ndarray
    params: ExtractionParams = field(default_factory=ExtractionParams)

    @property
    def n_mels(self) -> int:
        return self.bins.shape[0]

    @property
    def n_frames(self) -> int:
        return self.bins.shape[1]


def extract_middle_segment(w: Waveform, seconds: float) -> Waveform:
    """Centered crop of ``round(seconds * sample_rate)`` samples.

    Shorter inputs are zero-padded symmetrically (extra sample on the right).
    """
    if not seconds > 0:
        raise ValueError(f"seconds must be positive, got {seconds}")
    if len(w) == 0:
        raise ValueError("empty waveform")
    target = int(round(seconds * w.sample_rate))
    n = len(w)
    if n >= target:
        start = n // 2 - target // 2
        return Waveform(w.samples[start:start + target].copy(), w.sample_rate)
    left = (target - n) // 2
    out = np.zeros(target)
    out[left:left + n] = w.samples
    return Waveform(out, w.sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular HTK-mel filters from 0 Hz to Nyquist, peak height 1.

    Returns an ``(n_mels, n_fft // 2 + 1)`` matrix.
    """
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    lo, ctr, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs[None, :] - lo) / (ctr - lo)
    down = (hi - freqs[None, :]) / (hi - ctr)
    return np.maximum(0.0, np.minimum(up, down))


def hann_window(n: int) -> np.ndarray:
    # periodic form, as used for overlap-add analysis
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def power_frames(samples: np.ndarray, window_size: int, hop: int) -> np.ndarray:
    """Centered STFT power spectrum, shape ``(n_frames, window_size // 2 + 1)``.

    The signal is zero-padded by ``window_size // 2`` on both sides and frame
    ``t`` starts at ``t * hop`` in the padded signal, giving
    ``ceil(len / hop)`` frames.
    """
    n = len(samples)
    half = window_size // 2
    padded = np.pad(np.asarray(samples, dtype=np.float64), (half, window_size - half))
    if window_size > len(padded):
        raise ValueError("window_size exceeds padded signal length")
    n_frames = math.ceil(n / hop)
    frames = sliding_window_view(padded, window_size)[::hop][:n_frames]
    spec = np.fft.rfft(frames * hann_window(window_size), axis=1)
    return spec.real ** 2 + spec.imag ** 2


def mel_power(w: Waveform, p: ExtractionParams) -> np.ndarray:
    """Pre-log mel energies, ``(n_mels, n_frames)``."""
    if len(w) < 1:
        raise ValueError("empty waveform")
    power = power_frames(w.samples, p.window_size, p.hop)
    fb = mel_filterbank(p.n_mels, p.window_size, p.sample_rate)
    return fb @ power.T


def compute_log_mel(w: Waveform, p: ExtractionParams | None = None) -> MelSpectrogram:
    p = p or ExtractionParams()
    if w.sample_rate != p.sample_rate:
        raise ValueError(
            f"sample rate {w.sample_rate} Hz does not match extraction rate {p.sample_rate} Hz; "
            "resample before extraction"
        )
    return MelSpectrogram(np.log(p.log_offset + mel_power(w, p)), p)


def song_log_mel(w: Waveform, p: ExtractionParams | None = None) -> MelSpectrogram:
    """Middle segment + log-mel, the per-song reference pipeline."""
    p = p or ExtractionParams()
    return compute_log_mel(extract_middle_segment(w, p.segment_seconds), p)


def summarize_mean_std(m) -> np.ndarray:
    """Per-bin mean then per-bin population std over frames, ``2 * n_mels`` values."""
    bins = m.bins if isinstance(m, MelSpectrogram) else np.asarray(m, dtype=np.float64)
    if bins.ndim != 2 or bins.shape[1] < 1:
        raise ValueError(f"expected (n_mels, n_frames>=1) matrix, got {bins.shape}")
    return np.concatenate([bins.mean(axis=1), bins.std(axis=1)])


# -- file formats -----------------------------------------------------------

def read_wav(path, expected_rate: int | None = REFERENCE_SAMPLE_RATE) -> Waveform:
    """Read a PCM16 / float32 WAV file; stereo is averaged to mono."""
    try:
        rate, data = wavfile.read(str(path))
    except (ValueError, OSError) as exc:
        raise DataValidationError(f"{path}: cannot read WAV ({exc})") from exc
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    elif data.dtype.kind == "f":
        data = data.astype(np.float64)
    else:
        raise DataValidationError(f"{path}: unsupported sample type {data.dtype}")
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.size == 0:
        raise DataValidationError(f"{path}: no samples")
    if expected_rate is not None and rate != expected_rate:
        raise DataValidationError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    return Waveform(data, rate)


def write_wav(path, w: Waveform) -> None:
    wavfile.write(str(path), w.sample_rate, w.samples.astype(np.float32))


def save_spectrogram(path, m: MelSpectrogram, song_id: str) -> Path:
    """Write ``<path>`` (little-endian float32, mel-bin major) and ``<path>.json``."""
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(m.bins, dtype="<f4").tobytes())
    sidecar = {
        "song_id": song_id,
        "n_mels": m.n_mels,
        "n_frames": m.n_frames,
        "params": m.params.to_dict(),
    }
    sidecar_path = path.with_name(path.name + ".json")
    sidecar_path.write_text(json.dumps(sidecar, sort_keys=True, indent=1))
    return sidecar_path


def load_spectrogram(path) -> tuple[MelSpectrogram, dict]:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    if raw.size != meta["n_mels"] * meta["n_frames"]:
        raise DataValidationError(f"{path}: size does not match sidecar shape")
    bins = raw.reshape(meta["n_mels"], meta["n_frames"]).astype(np.float64)
    return MelSpectrogram(bins, ExtractionParams(**meta["params"])), meta
