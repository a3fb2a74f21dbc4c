"""Pipeline configuration: one JSON file, overridable per-flag on the CLI."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

CACHE_DIR_ENV = "AVDKIT_CACHE"


@dataclass
class PipelineConfig:
    # artifact paths
    raw_corpus_path: str = "corpus_raw.csv"
    corpus_path: str = "corpus.csv"
    filter_log_path: str = "filter_log.json"
    rejects_path: str = "rejects.json"
    cache_dir: str = ".avdkit_cache"
    annotations_log: str = "annotations.jsonl"
    tasks_path: str = "tasks.jsonl"
    truth_path: str = "truth.jsonl"
    quality_path: str = "quality.json"
    model_path: str = "model.json"
    span_model_path: str = "span_classifier.json"
    predictions_path: str = "pred.jsonl"
    extractions_path: str = "extraction.jsonl"
    eval_path: str = "eval.json"
    cv_path: str = "cv.json"
    cv_table_path: str = "cv_summary.tsv"
    analytics_dir: str = "analytics"
    # filtering
    min_description_words: int = 5
    excluded_manufacturers: list[str] = field(default_factory=lambda: ["Apple", "Uber"])
    dedup_enabled: bool = False
    # modeling
    tag_mode: str = "Combined55"
    epochs: int = 15
    seed: int = 0
    folds: int = 5
    backend_command: Optional[list[str]] = None
    backend_url: Optional[str] = None
    # annotation service
    redundancy: int = 3
    workers: list[str] = field(default_factory=list)
    host: str = "127.0.0.1"
    port: int = 8077
    cors_origins: list[str] = field(default_factory=lambda: ["*"])

    @classmethod
    def load(cls, path: str | Path | None) -> "PipelineConfig":
        config = cls()
        if path is not None:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
            known = {f.name for f in dataclasses.fields(cls)}
            unknown = set(raw) - known
            if unknown:
                raise ValueError(f"unknown config keys: {sorted(unknown)}")
            for key, value in raw.items():
                setattr(config, key, value)
        env_cache = os.environ.get(CACHE_DIR_ENV)
        if env_cache:
            config.cache_dir = env_cache
        return config

    def override(self, **kwargs) -> "PipelineConfig":
        for key, value in kwargs.items():
            if value is not None:
                setattr(self, key, value)
        return self
