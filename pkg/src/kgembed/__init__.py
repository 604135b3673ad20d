"""Knowledge graph embedding engine with a batched link-prediction evaluator."""

from .kg import (
    KnowledgeGraph,
    build_filter,
    corruption_stats,
    load_splits,
    load_triples,
    parse_triples,
    redundancy_metrics,
    split_kg,
    write_triples,
)
from .models import MODEL_KINDS, init_model
from .sampling import make_sampler
from .training import AdamState, TrainConfig, adam_step, parse_config, resolve_config, train_epoch
from .evaluation import bench_compare, bench_eval, classify, fit_thresholds, link_prediction
from .checkpoint import load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "KnowledgeGraph",
    "build_filter",
    "corruption_stats",
    "load_splits",
    "load_triples",
    "parse_triples",
    "redundancy_metrics",
    "split_kg",
    "write_triples",
    "MODEL_KINDS",
    "init_model",
    "make_sampler",
    "AdamState",
    "TrainConfig",
    "adam_step",
    "parse_config",
    "resolve_config",
    "train_epoch",
    "bench_compare",
    "bench_eval",
    "classify",
    "fit_thresholds",
    "link_prediction",
    "load_checkpoint",
    "save_checkpoint",
]
