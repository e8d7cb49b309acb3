"""Run configuration: one flat dataclass holding every tunable.

A config can be loaded from a JSON file and overridden field by field from
CLI flags. Unknown keys are rejected (typos should never silently fall back
to defaults). The sha256 digest of the effective config is embedded in every
artifact this package writes, either inline (JSON artifacts) or in a
sidecar ``<artifact>.meta.json`` (formats whose layout is pinned, such as
CSV tables and the binary embedding file).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import UsageError

ASPECTS = ("service", "food_quality", "ambiance", "wait_time", "price", "menu_variety")

# Column order used by the rendered report tables (not by the CSV label
# format, which uses ASPECTS order).
REPORT_ASPECT_ORDER = ("service", "ambiance", "food_quality", "menu_variety", "wait_time", "price")

CANONICAL_CUISINES = (
    "American", "Italian", "Mexican", "Chinese", "Japanese", "Thai",
    "Mediterranean", "Indian", "Cajun/Creole", "Vietnamese", "Other",
)


@dataclass
class RunConfig:
    seed: int = 0
    workers: int = 1

    # text preprocessing
    stopwords_path: str | None = None   # None -> bundled list
    lemmas_path: str | None = None      # None -> bundled lexicon

    # tf-idf
    tfidf_max_features: int = 400

    # subword skip-gram embeddings
    emb_dim: int = 100
    emb_min_n: int = 3
    emb_max_n: int = 6
    emb_window: int = 5
    emb_epochs: int = 5
    emb_lr: float = 0.05
    emb_negatives: int = 5
    emb_min_count: int = 5
    emb_bucket_count: int = 2 ** 21

    # classifiers
    logreg_l2: float = 1e-4
    logreg_tol: float = 1e-6
    logreg_max_iter: int = 1000
    svm_l2: float = 1e-4
    svm_epochs: int = 100
    smote_k: int = 5

    # lda
    lda_topics: int = 5
    lda_alpha: float = 0.1
    lda_beta: float = 0.01
    lda_iterations: int = 1000
    lda_top_words: int = 10

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def replace(self, **kwargs) -> "RunConfig":
        return dataclasses.replace(self, **kwargs)


_FIELD_TYPES = {f.name: f for f in dataclasses.fields(RunConfig)}


def load_config(path: str | Path) -> RunConfig:
    """Read a JSON config file, rejecting unknown keys."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise UsageError(f"config {path}: top level must be a JSON object")
    unknown = sorted(set(raw) - set(_FIELD_TYPES))
    if unknown:
        raise UsageError(f"config {path}: unknown keys {unknown}")
    return RunConfig(**raw)


def write_meta(artifact_path: str | Path, config: RunConfig, **extra) -> Path:
    """Write the ``<artifact>.meta.json`` sidecar recording the config digest."""
    artifact_path = Path(artifact_path)
    meta = {
        "artifact": artifact_path.name,
        "config_digest": config.digest(),
        "config": config.to_dict(),
    }
    meta.update(extra)
    meta_path = artifact_path.with_name(artifact_path.name + ".meta.json")
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta_path
