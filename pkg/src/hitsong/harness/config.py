"""Experiment configuration read from a flat ``key = value`` text file.

Relative paths in the file resolve against the file's directory. Lines
starting with ``#`` are comments; list values are comma separated.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..models import METHODS, ModelSpec
from ..nn import TrainConfig

PATH_KEYS = ("catalog", "audio_dir", "cache_dir", "tags", "out")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    methods: tuple[str, ...] = METHODS
    subsets: tuple[str, ...] | None = None
    repetitions: int = 10
    seed: int = 0
    catalog: Path | None = None
    audio_dir: Path | None = None
    cache_dir: Path | None = None
    tags: Path | None = None
    out: Path = Path("results")
    k: int = 100
    top_m: int = 50
    sample_size: int | None = None
    genre_tags: int = 10
    segment_seconds: float = 60.0
    joint_init: str = "pretrained"
    jobs: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelSpec = field(default_factory=lambda: ModelSpec("m1"))

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
        if self.k < 1 or self.top_m < 1:
            raise ConfigError("k and top_m must be >= 1")
        if self.joint_init not in ("pretrained", "cold"):
            raise ConfigError("joint_init must be 'pretrained' or 'cold'")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def validate_paths(self, *keys: str) -> None:
        for key in keys or ("catalog", "cache_dir", "tags"):
            p = getattr(self, key)
            if p is None:
                raise ConfigError(f"config is missing '{key}'")
            if not Path(p).exists():
                raise ConfigError(f"{key} path does not exist: {p}")

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (TrainConfig,)):
                v = v.to_dict()
            elif isinstance(v, ModelSpec):
                v = {k: v.to_dict()[k] for k in ("feature_maps", "w_init", "dropout_rate")}
            elif isinstance(v, Path):
                v = str(v)
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d


_TRAIN_KEYS = {f.name: f.type for f in fields(TrainConfig)}


def _split(v: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in v.split(",") if p.strip())


def parse_config_text(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        raw[key] = value
    return config_from_mapping(raw, base_dir)


def config_from_mapping(raw: dict, base_dir: Path | None = None, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    top, train, model = {}, {}, {}
    for key, value in raw.items():
        if key.startswith("synth_"):
            continue
        try:
            if key in PATH_KEYS:
                p = Path(value)
                top[key] = p if p.is_absolute() or base_dir is None else base_dir / p
            elif key in ("methods", "subsets"):
                top[key] = _split(value) if isinstance(value, str) else tuple(value)
            elif key in ("repetitions", "seed", "k", "top_m", "genre_tags", "jobs"):
                top[key] = int(value)
            elif key == "sample_size":
                top[key] = None if str(value).lower() in ("", "none", "all") else int(value)
            elif key == "segment_seconds":
                top[key] = float(value)
            elif key == "joint_init":
                top[key] = str(value)
            elif key in _TRAIN_KEYS:
                caster = float if key in ("learning_rate", "lr_decay", "dropout_rate") else int
                train[key] = caster(value)
            elif key == "feature_maps":
                model[key] = tuple(int(v) for v in _split(value)) if isinstance(value, str) else tuple(value)
            elif key in ("w_init", "dropout"):
                model["w_init" if key == "w_init" else "dropout_rate"] = float(value)
            else:
                raise ConfigError(f"unknown config key '{key}'")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value for '{key}': {value!r}") from exc
    try:
        if "dropout_rate" in train:
            model.setdefault("dropout_rate", train["dropout_rate"])
        return replace(
            cfg,
            **top,
            train=replace(cfg.train, **train),
            model=replace(cfg.model, **model),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), path.parent)
