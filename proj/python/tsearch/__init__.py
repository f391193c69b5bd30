"""Temporal search over long videos, with a synthetic oracle backend."""

import json

from ._tsearch import (
    BackendError,
    ConfigError,
    DomainError,
    compute_confidence,
    interval_iou,
    node_value,
    uniform_sample,
    uniform_split,
)
from . import _tsearch

__all__ = [
    "BackendError",
    "ConfigError",
    "DomainError",
    "compute_confidence",
    "interval_iou",
    "node_value",
    "uniform_sample",
    "uniform_split",
    "search_config",
    "generate_corpus",
    "search",
    "run_manifest",
    "report_from_traces",
]


def _encode(obj):
    return "" if obj is None else json.dumps(obj)


def search_config(overrides=None):
    """Validated search configuration: defaults updated with overrides."""
    return json.loads(_tsearch._config(_encode(overrides)))


def generate_corpus(spec=None):
    """Manifest records with embedded synthetic worlds; canonical corpus by default."""
    return json.loads(_tsearch._corpus(_encode(spec)))


def search(world, strategy="ts-bfs", config=None):
    """Runs one strategy on a synthetic world (a record's "world" object)."""
    return json.loads(_tsearch._search(json.dumps(world), strategy, _encode(config)))


def run_manifest(records, strategy="ts-bfs", config=None, workers=1, out_dir=None):
    """Runs a strategy over manifest records with the oracle backend and returns the report."""
    out = None if out_dir is None else str(out_dir)
    return json.loads(_tsearch._run_manifest(json.dumps(records), strategy, _encode(config), workers, out))


def report_from_traces(path):
    """Rebuilds a run report from a persisted traces.jsonl."""
    return json.loads(_tsearch._report_from_traces(str(path)))
