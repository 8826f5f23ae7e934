"""Grid runner: subsets x methods x repetitions, trained and evaluated on
fresh seeded splits, aggregated into a Table-1-shaped grid.

Every repetition derives its split, initialization and shuffling seeds from
``(config.seed, subset index, repetition)`` so results do not depend on the
worker count or execution order.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import DataValidationError, TrainingError
from ..evaluation import METRICS, average_reports, evaluate, genre_distribution, ranking, RankingReport
from ..models import METHODS, JointModel, ModelSpec, build_joint, build_model, with_method
from ..nn import predict_batches, train
from ..popularity import sample_top_k, split_dataset
from .cache import load_cached_mels
from .config import ExperimentConfig
from .data import Dataset, ingest_catalog, load_tag_file
from .synth import tag_names

log = logging.getLogger(__name__)

DEPENDENCIES = {"m5": ("m2", "m4"), "m6": ("m3", "m4")}


def repetition_seeds(seed: int, subset_index: int, rep: int) -> dict[str, int]:
    state = np.random.SeedSequence([seed, subset_index, rep]).generate_state(3)
    return {"split": int(state[0]), "init": int(state[1]), "train": int(state[2])}


@dataclass
class Normalizer:
    """Affine standardization fitted on the training split."""

    stats: dict[str, tuple[np.ndarray, np.ndarray]]

    @staticmethod
    def _fit(a: np.ndarray, axes) -> tuple[np.ndarray, np.ndarray]:
        mu = a.mean(axis=axes, keepdims=True)
        sd = a.std(axis=axes, keepdims=True)
        sd[sd == 0] = 1.0
        return mu, sd

    @classmethod
    def fit(cls, features: dict, targets: np.ndarray) -> "Normalizer":
        stats = {"target": cls._fit(np.asarray(targets, dtype=np.float64), 0)}
        for kind, arr in features.items():
            stats[kind] = cls._fit(arr, (0, 1, 3) if kind == "mel" else 0)
        return cls(stats)

    def features(self, features: dict) -> dict:
        return {k: (v - self.stats[k][0]) / self.stats[k][1] for k, v in features.items()}

    def target(self, y):
        mu, sd = self.stats["target"]
        return (np.asarray(y) - mu) / sd

    def inverse_target(self, z):
        mu, sd = self.stats["target"]
        return np.asarray(z) * sd + mu

    def to_dict(self) -> dict:
        return {k: {"mean": mu.ravel().tolist(), "std": sd.ravel().tolist(), "shape": list(mu.shape)}
                for k, (mu, sd) in self.stats.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls({k: (np.array(v["mean"]).reshape(v["shape"]), np.array(v["std"]).reshape(v["shape"]))
                    for k, v in d.items()})


def _index(ds: Dataset, ids) -> np.ndarray:
    pos = {sid: i for i, sid in enumerate(ds.ids)}
    return np.array([pos[s] for s in ids], dtype=int)


def _needed(methods) -> list[str]:
    need = set(methods)
    for m in methods:
        need.update(DEPENDENCIES.get(m, ()))
    return [m for m in METHODS if m in need]


def run_repetition(ds: Dataset, subset_index: int, rep: int, cfg: ExperimentConfig, keep_models: bool = False) -> dict:
    """Train and evaluate every requested method on one seeded split."""
    seeds = repetition_seeds(cfg.seed, subset_index, rep)
    split = split_dataset(ds.songs, seed=seeds["split"])
    parts = {name: _index(ds, getattr(split, name)) for name in ("train", "val", "test")}
    feats = ds.features()
    y = ds.hit_scores
    norm = Normalizer.fit({k: v[parts["train"]] for k, v in feats.items()}, y[parts["train"]])
    zf, zy = norm.features(feats), norm.target(y)
    sets = {name: ({k: v[idx] for k, v in zf.items()}, zy[idx]) for name, idx in parts.items()}

    test_ids = [ds.ids[i] for i in parts["test"]]
    k = min(cfg.k, len(test_ids))
    m_top = min(cfg.top_m, len(test_ids))
    tag_lookup = {sid: ds.tags[i] for i, sid in enumerate(ds.ids)} if ds.tags is not None else None
    names = tag_names()
    genre_idx = list(range(min(cfg.genre_tags, len(names))))

    trained, cells, genre, models = {}, [], {}, {}
    for mi, method in enumerate(_needed(cfg.methods)):
        spec = with_method(cfg.model, method)
        init_rng = np.random.default_rng([seeds["init"], mi])
        tcfg = replace(cfg.train, seed=seeds["train"] + mi)
        cell = {"subset": ds.name, "method": method, "rep": rep, "split_seed": seeds["split"], "train_seed": tcfg.seed}
        try:
            if method in DEPENDENCIES and cfg.joint_init == "pretrained":
                audio_m, tag_m = DEPENDENCIES[method]
                missing = [d for d in (audio_m, tag_m) if d not in trained]
                if missing:
                    raise TrainingError(f"branch model(s) {missing} failed")
                model = build_joint(copy.deepcopy(trained[audio_m]), copy.deepcopy(trained[tag_m]), spec.w_init)
            else:
                model = build_model(spec, init_rng)
            model, history = train(model, sets["train"], sets["val"], tcfg)
        except TrainingError as exc:
            log.warning("%s/%s rep %d failed: %s", ds.name, method, rep, exc)
            if method in cfg.methods:
                cells.append({**cell, "status": "failed", "error": str(exc)})
            continue
        trained[method] = model
        if method not in cfg.methods:
            continue
        pred = norm.inverse_target(predict_batches(model, sets["test"][0]))
        report = evaluate(y[parts["test"]], pred, k, ids=test_ids)
        cell.update({
            "status": "ok",
            "metrics": report.metrics(),
            "k": k,
            "n": len(test_ids),
            "val_mse": min(h["val_mse"] for h in history),
            "epochs": len(history) - 1,
            "test_ids": test_ids,
            "pred_scores": pred.tolist(),
        })
        if isinstance(model, JointModel):
            cell["w"] = float(model.w)
        cells.append(cell)
        if tag_lookup is not None:
            order = [test_ids[i] for i in ranking(pred, test_ids)]
            genre[method] = genre_distribution(tag_lookup, order, m_top, names, genre_idx).counts
        if keep_models:
            models[method] = (model, spec, history)
    if tag_lookup is not None:
        truth = [test_ids[i] for i in ranking(y[parts["test"]], test_ids)]
        genre["ground_truth"] = genre_distribution(tag_lookup, truth, m_top, names, genre_idx).counts
    out = {"subset": ds.name, "rep": rep, "cells": cells, "genre": genre,
           "true_scores": y[parts["test"]].tolist(), "split_seed": seeds["split"]}
    if keep_models:
        out["models"] = models
        out["normalizer"] = norm
    return out


def _run_task(args):
    ds, si, rep, cfg = args
    return run_repetition(ds, si, rep, cfg)


def run_grid(datasets: list[Dataset], cfg: ExperimentConfig) -> dict:
    """Result bundle for every subset x method x repetition."""
    tasks = [(ds, si, rep, cfg) for si, ds in enumerate(datasets) for rep in range(cfg.repetitions)]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            reps = list(pool.map(_run_task, tasks))
    else:
        reps = [_run_task(t) for t in tasks]
    return assemble_bundle(datasets, reps, cfg)


def assemble_bundle(datasets, reps, cfg: ExperimentConfig) -> dict:
    table, raw = {}, []
    for ds in datasets:
        table[ds.name] = {}
        mine = [r for r in reps if r["subset"] == ds.name]
        for method in cfg.methods:
            cells = [c for r in mine for c in r["cells"] if c["method"] == method]
            ok = [c for c in cells if c["status"] == "ok"]
            entry = {"n_ok": len(ok), "n_failed": len(cells) - len(ok)}
            if ok:
                avg = average_reports([RankingReport(**c["metrics"], k=c["k"], n=c["n"]) for c in ok])
                entry.update(avg.metrics())
                entry["val_mse"] = float(np.mean([c["val_mse"] for c in ok]))
                if avg.undefined:
                    entry["undefined"] = avg.undefined
                if method in DEPENDENCIES:
                    entry["w"] = float(np.mean([c["w"] for c in ok]))
            else:
                entry.update({m: None for m in METRICS})
            table[ds.name][method] = entry
        for r in mine:
            raw.append({k: v for k, v in r.items() if k not in ("models", "normalizer")})
    return {
        "format": "hitsong-results/1",
        "config": cfg.to_dict(),
        "table": table,
        "repetitions": raw,
        # figure-style genre bars come from the first repetition; all are in "repetitions"
        "genre": {
            ds.name: next((r["genre"] for r in raw if r["subset"] == ds.name and r["rep"] == 0), {})
            for ds in datasets
        },
    }


def all_failed(bundle: dict) -> bool:
    cells = [c for r in bundle["repetitions"] for c in r["cells"]]
    return bool(cells) and all(c["status"] != "ok" for c in cells)


# -- I/O -------------------------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="")
    os.replace(tmp, path)


def table_csv(bundle: dict) -> str:
    subsets = list(bundle["table"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method"] + [f"{s}_{m}" for s in subsets for m in METRICS])
    methods = bundle["config"]["methods"]
    for method in methods:
        row = [method]
        for s in subsets:
            entry = bundle["table"][s][method]
            row += ["" if entry[m] is None else f"{entry[m]:.4f}" for m in METRICS]
        w.writerow(row)
    return buf.getvalue()


def genre_csv(bundle: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subset", "ranking", "tag", "count"])
    for subset, by_method in bundle["genre"].items():
        for name, counts in by_method.items():
            for tag, count in counts.items():
                w.writerow([subset, name, tag, count])
    return buf.getvalue()


def write_bundle(bundle: dict, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / "results.json", "table": out / "table.csv", "genre": out / "genre.csv"}
    _atomic_write(paths["json"], json.dumps(bundle, sort_keys=True, indent=1))
    _atomic_write(paths["table"], table_csv(bundle))
    _atomic_write(paths["genre"], genre_csv(bundle))
    return paths


# -- loading from disk ---------------------------------------------------------------

def needs_mel(methods) -> bool:
    return any(m != "m4" for m in methods)


def needs_tags(methods) -> bool:
    return any(m in ("m4", "m5", "m6") for m in methods)


def load_datasets(cfg: ExperimentConfig) -> list[Dataset]:
    keys = ["catalog"]
    if needs_mel(cfg.methods):
        keys.append("cache_dir")
    if needs_tags(cfg.methods):
        keys.append("tags")
    cfg.validate_paths(*keys)
    songs = ingest_catalog(cfg.catalog).songs
    tags = load_tag_file(cfg.tags) if needs_tags(cfg.methods) else None
    subsets = cfg.subsets or tuple(sorted({s.subset for s in songs}))
    datasets = []
    for name in subsets:
        sub = [s for s in songs if s.subset == name]
        if not sub:
            raise DataValidationError(f"subset '{name}' has no songs in {cfg.catalog}")
        if cfg.sample_size is not None:
            sub = sample_top_k(sub, cfg.sample_size)
        sub = sorted(sub, key=lambda s: s.song_id)
        mels = None
        if needs_mel(cfg.methods):
            found, missing = load_cached_mels(cfg.cache_dir, [s.song_id for s in sub])
            if missing:
                log.warning("subset %s: %d songs without cached spectrograms dropped", name, len(missing))
            sub = [s for s in sub if s.song_id in found]
        if tags is not None:
            lacking = [s.song_id for s in sub if s.song_id not in tags]
            if lacking:
                log.warning("subset %s: %d songs without tag vectors dropped", name, len(lacking))
            sub = [s for s in sub if s.song_id in tags]
        if len(sub) < 3:
            raise DataValidationError(f"subset '{name}': fewer than 3 usable songs")
        if needs_mel(cfg.methods):
            frames = {found[s.song_id].shape for s in sub}
            if len(frames) != 1:
                raise DataValidationError(f"subset '{name}': cached spectrograms differ in shape {sorted(frames)}")
            mels = np.stack([found[s.song_id] for s in sub])[:, None]
        tag_arr = np.stack([tags[s.song_id] for s in sub]) if tags is not None else None
        datasets.append(Dataset(name, sub, mels, tag_arr))
    return datasets


def run_experiment(cfg: ExperimentConfig) -> dict:
    bundle = run_grid(load_datasets(cfg), cfg)
    write_bundle(bundle, cfg.out)
    return bundle
