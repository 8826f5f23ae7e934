"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that the terminal summary prints at the
end of the run.
"""
import itertools
import time
import zlib
from dataclasses import replace

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE_RESULTS, corpus_dataset
from gradcheck import check_layer, check_model
from hitsong.audio import ExtractionParams, Waveform, song_log_mel
from hitsong.evaluation import genre_distribution, kendall_tau, ndcg_at_k, ranking, recall_at_k, spearman_rho
from hitsong.harness.config import ExperimentConfig, load_config
from hitsong.harness.experiment import run_experiment, run_repetition
from hitsong.harness.synth import SyntheticSpec, generate_synthetic, write_corpus
from hitsong.models import METHODS, ModelSpec, build_joint, build_m2, build_m3, build_model
from hitsong.nn import Dense, Graph, TrainConfig
from hitsong.harness.cache import build_feature_cache
from test_nn import layer_case

N_SEEDS = 10


def record(name, ok, detail=""):
    ACCEPTANCE_RESULTS[name] = (bool(ok), detail)
    assert ok, f"{name}: {detail}"


# -- 1 ---------------------------------------------------------------------------

def test_01_metric_oracle_equivalence():
    start = time.perf_counter()
    truth = [0.3, 2.0, -1.0, 2.0, 5.5, 0.7, -3.2]
    worst = 0.0
    for n in range(2, 8):
        t = truth[:n]
        for perm in itertools.permutations(range(n)):
            p = [float(v) for v in perm]
            diffs = [abs(kendall_tau(t, p) - oracles.kendall_b(t, p)),
                     abs(spearman_rho(t, p) - oracles.spearman(t, p))]
            for k in range(1, n + 1):
                diffs.append(abs(recall_at_k(t, p, k) - oracles.recall(t, p, k)))
                diffs.append(abs(ndcg_at_k(t, p, k) - oracles.ndcg(t, p, k)))
            worst = max(worst, *diffs)
    elapsed = time.perf_counter() - start
    record("1. metric oracle equivalence", worst <= 1e-12 and elapsed < 30,
           f"max diff {worst:.1e}, {elapsed:.1f}s")


# -- 2 ---------------------------------------------------------------------------

def _joint_case(rng):
    n_feat = int(rng.integers(1, 6))
    audio = Graph((n_feat,), "mean_std")
    audio.add("d", Dense(n_feat, 1))
    tag = Graph((50,), "tags")
    tag.add("d", Dense(50, 1))
    j = build_joint(audio, tag, float(rng.uniform(0.05, 0.95)))
    for name, value in j.parameters():
        if name != "w":
            j.set_parameter(name, rng.normal(size=np.shape(value)))
    b = int(rng.integers(1, 6))
    x = {"mean_std": rng.normal(size=(b, n_feat)), "tags": rng.uniform(size=(b, 50))}
    return j, x, rng.normal(size=b)


def test_02_gradient_correctness():
    start = time.perf_counter()
    kinds = ["dense", "conv2d_valid", "conv2d_padded", "relu", "dropout_eval", "global_avg_pool_time"]
    worst = {}
    for kind in kinds:
        rng = np.random.default_rng(zlib.crc32(kind.encode()))
        worst[kind] = max(max(check_layer(*layer_case(kind, rng), rng, h=1e-3).values()) for _ in range(20))
    rng = np.random.default_rng(99)
    joint_errs = []
    for _ in range(20):
        j, x, y = _joint_case(rng)
        joint_errs.append(max(check_model(j, x, y, h=1e-3).values()))
    worst["joint_blend"] = max(joint_errs)
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-4 and elapsed < 60
    record("2. gradient correctness", ok,
           ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", {elapsed:.1f}s")


# -- 3 ---------------------------------------------------------------------------

def test_03_shape_ledger():
    rng = np.random.default_rng(0)
    wav = Waveform(0.1 * rng.normal(size=22050 * 90), 22050)
    mel = song_log_mel(wav, ExtractionParams())
    checks = {"mel": mel.bins.shape == (128, 646)}
    x = mel.bins[None, None]

    m2 = build_m2(ModelSpec("m2"), rng)
    m2.forward(x)
    checks["m2"] = (m2.intermediate("conv1").shape[2:] == (1, 643)
                    and m2.intermediate("conv2").shape[2:] == (1, 640)
                    and m2.intermediate("pool").shape == (1, 1))

    m3 = build_m3(ModelSpec("m3"), rng)
    m3.forward(x)
    branches = [m3.intermediate(f"branch{i}").shape for i in range(3)]
    checks["m3"] = (len({b[3] for b in branches}) == 1
                    and m3.intermediate("concat").shape[1] == 3 * branches[0][1]
                    and m3.intermediate("concat").shape[3] == branches[0][3])
    record("3. shape ledger", all(checks.values()),
           f"mel {mel.bins.shape}, m3 branches {branches}")


# -- 4 ---------------------------------------------------------------------------

def test_04_linear_recovery():
    start = time.perf_counter()
    ds, _ = corpus_dataset(SyntheticSpec(n_songs=600, seed=0, planted_model="linear_band_energy", noise_sigma=0.0))
    cfg = ExperimentConfig(methods=("m1",), repetitions=1, train=TrainConfig(epochs=10))
    cell = run_repetition(ds, 0, 0, cfg)["cells"][0]
    rho = cell["metrics"]["spearman"]
    elapsed = time.perf_counter() - start
    record("4. linear recovery", rho >= 0.95 and elapsed < 120, f"rho {rho:.4f}, {elapsed:.1f}s")


# -- 5, 6 --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def nonlinear_runs():
    """One repetition of every method per seed; each seed draws its own corpus."""
    runs, seconds = [], 0.0
    for seed in range(N_SEEDS):
        start = time.perf_counter()
        ds, _ = corpus_dataset(SyntheticSpec(n_songs=600, seed=seed,
                                             planted_model="nonlinear_band_interaction", noise_sigma=0.1))
        cfg = ExperimentConfig(methods=METHODS, repetitions=1, seed=seed)
        runs.append({c["method"]: c for c in run_repetition(ds, 0, 0, cfg)["cells"]})
        seconds += time.perf_counter() - start
    return runs, seconds


def _mean(runs, method, key):
    return float(np.mean([r[method]["metrics"]["spearman"] if key == "rho" else r[method][key] for r in runs]))


@pytest.mark.slow
def test_05_depth_advantage(nonlinear_runs):
    runs, seconds = nonlinear_runs
    assert all(c["status"] == "ok" for r in runs for c in r.values())
    rho = {m: _mean(runs, m, "rho") for m in ("m1", "m2", "m3")}
    ok = rho["m2"] >= rho["m1"] + 0.03 and rho["m3"] >= rho["m1"] + 0.03 and seconds < 1200
    record("5. depth advantage", ok,
           f"mean rho m1 {rho['m1']:.4f} m2 {rho['m2']:.4f} m3 {rho['m3']:.4f}, {seconds / 60:.1f} min (all six methods)")


@pytest.mark.slow
def test_06_joint_dominance(nonlinear_runs):
    runs, _ = nonlinear_runs
    mse = {m: _mean(runs, m, "val_mse") for m in METHODS}
    blend_ok = mse["m5"] <= 1.05 * min(mse["m2"], mse["m4"]) and mse["m6"] <= 1.05 * min(mse["m3"], mse["m4"])

    rng = np.random.default_rng(6)
    spec = ModelSpec("m2", feature_maps=(8, 8, 8, 8, 1))
    audio = build_m2(spec, rng)
    joint = build_joint(audio, build_model(ModelSpec("m4"), rng), 1.0)
    bit_equal = True
    for _ in range(50):
        x = {"mel": rng.normal(scale=float(rng.uniform(0.1, 10)), size=(4, 1, 128, int(rng.integers(7, 40)))),
             "tags": rng.uniform(size=(4, 50))}
        bit_equal &= np.array_equal(joint.forward(x), audio.forward(x))
    record("6. joint-model dominance", blend_ok and bit_equal,
           "mean val MSE " + " ".join(f"{m} {v:.4f}" for m, v in mse.items()) + f", w=1 bit-equal {bit_equal}")


# -- 7 ---------------------------------------------------------------------------

def _const_graph(kind, dim, value):
    g = Graph((dim,), kind)
    g.add("d", Dense(dim, 1))
    g.set_parameter("d.b", [value])
    return g


def test_07_blend_identities():
    rng = np.random.default_rng(7)
    x = {"mean_std": rng.normal(size=(5, 256)), "tags": rng.uniform(size=(5, 50))}
    f1, f2 = _const_graph("mean_std", 256, 0.0), _const_graph("tags", 50, 0.0)
    for g in (f1, f2):
        for name, v in g.parameters():
            g.set_parameter(name, rng.normal(size=np.shape(v)))
    j = build_joint(f1, f2, 1.0)
    ok = np.array_equal(j.forward(x), f1.forward(x))
    j.set_parameter("w", 0.0)
    ok &= np.array_equal(j.forward(x), f2.forward(x))
    half = build_joint(_const_graph("mean_std", 256, 2.0), _const_graph("tags", 50, 4.0), 0.5)
    value = half.forward({"mean_std": np.zeros((1, 256)), "tags": np.zeros((1, 50))})[0]
    ok &= value == 3.0
    record("7. blend identities", ok, f"(0.5, 2, 4) -> {value!r}")


# -- 8 ---------------------------------------------------------------------------

def test_08_determinism(tmp_path):
    write_corpus(generate_synthetic(SyntheticSpec(n_songs=40, seed=8, planted_model="nonlinear_band_interaction",
                                                  noise_sigma=0.1, clip_seconds=1.0)), tmp_path)
    base = load_config(tmp_path / "experiment.cfg")
    base = replace(base, repetitions=2, k=3, top_m=3, train=replace(base.train, epochs=3),
                   model=replace(base.model, feature_maps=(8, 8, 8, 8, 1)))
    build_feature_cache([f"song{i:05d}" for i in range(40)], base.audio_dir, base.cache_dir,
                        ExtractionParams(segment_seconds=base.segment_seconds))
    cfg = replace(base, out=tmp_path / "results")
    outputs = []
    for _ in range(2):
        run_experiment(cfg)
        outputs.append({f: (cfg.out / f).read_bytes() for f in ("results.json", "table.csv", "genre.csv")})
        for f in cfg.out.iterdir():
            f.unlink()
    record("8. determinism", outputs[0] == outputs[1],
           f"{len(outputs[0]['results.json'])} byte bundle, methods {', '.join(base.methods)}")


# -- 9 ---------------------------------------------------------------------------

TRANSFORMS = [
    lambda v: 3.0 * v + 7.0,
    lambda v: np.exp(v / 4.0),
    lambda v: v ** 3 + v,
    np.arctan,
    lambda v: np.sign(v) * np.log1p(np.abs(v)),
]


def _all_metrics(t, p, k, ids):
    return np.array([recall_at_k(t, p, k, ids), ndcg_at_k(t, p, k, ids), kendall_tau(t, p), spearman_rho(t, p)])


def test_09_monotone_invariance():
    rng = np.random.default_rng(9)
    worst = 0.0
    for trial in range(100):
        n = int(rng.integers(5, 200))
        ids = [f"s{i:03d}" for i in rng.permutation(n)]
        t = rng.normal(size=n) if trial % 2 else rng.integers(-5, 6, size=n).astype(float)
        p = rng.normal(size=n)
        k = int(rng.integers(1, n + 1))
        base = _all_metrics(t, p, k, ids)
        f = TRANSFORMS[int(rng.integers(len(TRANSFORMS)))]
        for t2, p2 in ((f(t), p), (t, f(p))):
            worst = max(worst, float(np.max(np.abs(_all_metrics(t2, p2, k, ids) - base))))
    record("9. monotone invariance", worst <= 1e-12, f"max change {worst:.1e} over 100 trials")


# -- 10 --------------------------------------------------------------------------

def test_10_genre_distribution():
    corpus = generate_synthetic(SyntheticSpec(n_songs=300, seed=10))
    scores = np.array([s.hit_score for s in corpus.songs])
    order = [corpus.ids[i] for i in ranking(scores, corpus.ids)]
    lookup = dict(zip(corpus.ids, corpus.tags))
    top50 = genre_distribution(lookup, order, 50)
    sums_ok = sum(top50.counts.values()) == 50

    names = ["pop", "rock", "jazz", "folk"]
    crafted = {
        "a": [0.9, 0.1, 0.0, 0.0],
        "b": [0.2, 0.7, 0.1, 0.0],
        "c": [0.6, 0.3, 0.0, 0.1],
        "d": [0.0, 0.0, 0.2, 0.8],
        "e": [0.1, 0.8, 0.0, 0.1],
    }
    hand = {"pop": 2, "rock": 2, "folk": 1}
    got = genre_distribution(crafted, list("abcde"), 5, names).counts
    top3 = genre_distribution(crafted, ["d", "a", "b", "c", "e"], 3, names).counts
    record("10. genre distribution", sums_ok and got == hand and top3 == {"folk": 1, "pop": 1, "rock": 1},
           f"top-50 sum {sum(top50.counts.values())}, crafted {got}")
