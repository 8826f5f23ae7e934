"""``hitsong`` command line: ingest, cache-features, synth, train, evaluate,
experiment, plots.

Exit codes: 0 success, 1 usage error, 2 data validation failure,
3 training failed in every cell.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..audio import ExtractionParams
from ..errors import DataValidationError, TrainingError
from ..evaluation import evaluate as evaluate_scores
from ..models import METHODS, load_model, save_model
from ..nn import predict_batches
from ..popularity import split_dataset
from .cache import build_feature_cache
from .config import ConfigError, ExperimentConfig, load_config
from .data import ingest_catalog
from .experiment import (Normalizer, all_failed, load_datasets, repetition_seeds, run_experiment,
                         run_repetition, _index)
from .plots import emit_plots
from .synth import PLANTED_MODELS, SyntheticSpec, generate_synthetic, write_corpus

log = logging.getLogger("hitsong")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAINING = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="flat key = value experiment config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="hitsong", description="Audio-based hit song prediction harness")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="validate a listening-log catalog")
    p.add_argument("catalog", type=Path, nargs="?")

    p = sub.add_parser("cache-features", parents=[common], help="compute the spectrogram cache")
    p.add_argument("--catalog", dest="catalog_path", type=Path)
    p.add_argument("--audio-dir", type=Path)
    p.add_argument("--cache-dir", type=Path)
    p.add_argument("--segment-seconds", type=float)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--n-songs", type=int, default=600)
    p.add_argument("--planted-model", choices=PLANTED_MODELS, default="linear_band_energy")
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--clip-seconds", type=float, default=3.0)
    p.add_argument("--subset", default="synthetic")

    p = sub.add_parser("train", parents=[common], help="train one method on one repetition split")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--rep", type=int, default=0)
    p.add_argument("--subset")

    p = sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint on its test split")
    p.add_argument("checkpoint", type=Path)

    sub.add_parser("experiment", parents=[common], help="run the full method x subset x repetition grid")

    p = sub.add_parser("plots", parents=[common], help="emit plot data series")
    p.add_argument("--results", type=Path, help="results.json from an experiment run")
    p.add_argument("--bins", type=int, default=20)
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["out"] = args.out
    if args.jobs is not None:
        over["jobs"] = args.jobs
    try:
        return replace(cfg, **over)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _print(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True))


def cmd_ingest(args, cfg):
    path = args.catalog or cfg.catalog
    if path is None:
        raise UsageError("no catalog given (positional argument or config 'catalog')")
    report = ingest_catalog(path)
    subsets = {}
    for s in report.songs:
        subsets[s.subset] = subsets.get(s.subset, 0) + 1
    summary = {"songs": len(report.songs), "subsets": subsets,
               "rejected": [{"line": ln, "reason": why} for ln, why in report.rejected]}
    _print(summary)
    return EXIT_OK


def cmd_cache(args, cfg):
    catalog = args.catalog_path or cfg.catalog
    audio_dir = args.audio_dir or cfg.audio_dir
    cache_dir = args.cache_dir or cfg.cache_dir
    if not (catalog and audio_dir and cache_dir):
        raise UsageError("catalog, audio dir and cache dir are required")
    seconds = args.segment_seconds or cfg.segment_seconds
    songs = ingest_catalog(catalog).songs
    res = build_feature_cache([s.song_id for s in songs], audio_dir, cache_dir, ExtractionParams(segment_seconds=seconds))
    _print({"computed": len(res.computed), "reused": len(res.reused),
            "skipped": res.skipped, "errors": res.errors})
    return EXIT_DATA if res.errors else EXIT_OK


def cmd_synth(args, cfg):
    spec = SyntheticSpec(args.n_songs, args.seed if args.seed is not None else cfg.seed,
                         args.planted_model, args.noise_sigma, args.clip_seconds, subset=args.subset)
    out = args.out or Path("synthetic")
    paths = write_corpus(generate_synthetic(spec), out)
    _print({k: str(v) for k, v in paths.items()})
    return EXIT_OK


def _pick_subset(datasets, name):
    if name is None:
        return 0, datasets[0]
    for i, ds in enumerate(datasets):
        if ds.name == name:
            return i, ds
    raise UsageError(f"subset '{name}' not in config")


def cmd_train(args, cfg):
    cfg = replace(cfg, methods=(args.method,))
    datasets = load_datasets(cfg)
    si, ds = _pick_subset(datasets, args.subset)
    res = run_repetition(ds, si, args.rep, cfg, keep_models=True)
    if args.method not in res["models"]:
        print(res["cells"][0].get("error", "training failed"), file=sys.stderr)
        return EXIT_TRAINING
    model, spec, history = res["models"][args.method]
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{ds.name}_{args.method}_rep{args.rep}.ckpt"
    save_model(path, model, spec, {
        "subset": ds.name, "subset_index": si, "rep": args.rep, "seed": cfg.seed,
        "split_seed": res["split_seed"], "train_config": cfg.train.to_dict(),
        "normalizer": res["normalizer"].to_dict(), "history": history,
    })
    cell = res["cells"][0]
    _print({"checkpoint": str(path), "metrics": cell["metrics"], "val_mse": cell["val_mse"]})
    return EXIT_OK


def cmd_evaluate(args, cfg):
    model, spec, header = load_model(args.checkpoint)
    cfg = replace(cfg, methods=(spec.method,), subsets=(header["subset"],))
    ds = load_datasets(cfg)[0]
    split = split_dataset(ds.songs, seed=header["split_seed"])
    idx = _index(ds, split.test)
    norm = Normalizer.from_dict(header["normalizer"])
    feats = norm.features({k: v[idx] for k, v in ds.features().items() if k in norm.stats})
    pred = norm.inverse_target(predict_batches(model, feats))
    k = min(cfg.k, len(idx))
    report = evaluate_scores(ds.hit_scores[idx], pred, k, ids=list(split.test), keep_scores=True)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{Path(args.checkpoint).stem}_report.json"
    path.write_text(json.dumps(report.to_dict(include_scores=True), indent=1, sort_keys=True))
    _print({"report": str(path), **report.metrics()})
    return EXIT_OK


def cmd_experiment(args, cfg):
    bundle = run_experiment(cfg)
    _print(bundle["table"])
    return EXIT_TRAINING if all_failed(bundle) else EXIT_OK


def cmd_plots(args, cfg):
    songs = ingest_catalog(cfg.catalog).songs if cfg.catalog else None
    bundle = json.loads(args.results.read_text()) if args.results else None
    if songs is None and bundle is None:
        raise UsageError("plots needs a catalog in the config and/or --results")
    paths = emit_plots(cfg.out, songs, bundle, cfg.sample_size, cfg.seed, args.bins, cfg.subsets)
    _print({k: str(v) for k, v in paths.items()})
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest, "cache-features": cmd_cache, "synth": cmd_synth, "train": cmd_train,
    "evaluate": cmd_evaluate, "experiment": cmd_experiment, "plots": cmd_plots,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"hitsong: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataValidationError as exc:
        print(f"hitsong: data validation failed: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"hitsong: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
