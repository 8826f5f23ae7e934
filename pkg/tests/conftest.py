import numpy as np
import pytest

from hitsong.audio import ExtractionParams, song_log_mel
from hitsong.harness.data import Dataset
from hitsong.harness.synth import SyntheticSpec, generate_synthetic

ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def corpus_dataset(spec: SyntheticSpec) -> tuple[Dataset, object]:
    corpus = generate_synthetic(spec)
    params = ExtractionParams(segment_seconds=spec.clip_seconds)
    mels = np.stack([song_log_mel(w, params).bins for _, w in corpus.waveforms()])[:, None]
    return Dataset(spec.subset, corpus.songs, mels, corpus.tags), corpus


@pytest.fixture(scope="session")
def tiny_dataset():
    ds, _ = corpus_dataset(SyntheticSpec(n_songs=60, seed=3, planted_model="nonlinear_band_interaction",
                                         noise_sigma=0.1, clip_seconds=1.0))
    return ds


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split(".")[0])):
        ok, detail = ACCEPTANCE_RESULTS[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
