from .config import ExperimentConfig, load_config, parse_config_text
from .data import Dataset, ingest_catalog, load_tag_file
from .experiment import run_experiment, run_grid, run_repetition
from .synth import SyntheticSpec, generate_synthetic, write_corpus

__all__ = [
    "Dataset", "ExperimentConfig", "SyntheticSpec", "generate_synthetic", "ingest_catalog",
    "load_config", "load_tag_file", "parse_config_text", "run_experiment", "run_grid",
    "run_repetition", "write_corpus",
]
