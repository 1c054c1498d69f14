"""
Run configuration schema and loading.

Configuration files are YAML (JSON documents load through the same parser).
The schema is declared with pydantic models that reject unknown keys, so a
misspelled key fails before any computation starts.
"""

import json
import hashlib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import yaml
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, model_validator

from .error_handler import ConfigValidationError

NormalizationName = Literal["none", "row_l2", "coord_l2", "coord_minmax"]
LossVariantName = Literal["bsc", "bsc_masked", "mse", "combo", "triplet"]
ShuffleModeName = Literal["none", "random", "example_knn", "words", "clusters", "neighbors"]
MetricName = Literal["dot", "cosine", "euclidean"]

BSC_VARIANTS = ("bsc", "bsc_masked", "combo")

DEFAULT_CONFIG_PATH = Path("config/bsc_config.yaml")


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class LossConfig(_StrictModel):
    """Temperature, combo weight, binarization threshold and normalization of a loss."""

    temperature: float = Field(0.1, gt=0.0)
    combo_weight: float = Field(0.9, ge=0.0, le=1.0)
    threshold: float = 0.5
    normalization: NormalizationName = "row_l2"
    symmetrize: bool = True
    temperature_trainable: bool = False
    triplet_margin: float = Field(0.5, ge=0.0)


class ShuffleConfig(_StrictModel):
    """Batch-construction settings shared by every shuffle mode."""

    mode: ShuffleModeName = "example_knn"
    group_size: int = Field(8, ge=1)
    candidate_pool: int = Field(500, ge=0)
    shingle_size: int = Field(2, ge=1)
    element: Literal["first", "second"] = "first"
    stopwords: Optional[List[str]] = None
    stopwords_file: Optional[str] = None
    filter_identical: bool = False
    seed: int = 0
    k_clusters: int = Field(300, ge=1)
    neighbor_k: int = Field(7, ge=1)
    kmeans_max_iters: int = Field(100, ge=1)
    metric: MetricName = "cosine"
    n_jobs: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_pool(self) -> "ShuffleConfig":
        if self.candidate_pool < self.group_size - 1:
            raise ValueError(
                f"candidate_pool ({self.candidate_pool}) must be >= group_size - 1 ({self.group_size - 1})"
            )
        return self


class EncoderConfig(_StrictModel):
    """Shape and initialization of the hashed bag-of-n-grams encoder."""

    hash_buckets: int = Field(4096, ge=1)
    dim: int = Field(64, ge=1)
    init_scale: float = Field(0.05, gt=0.0)
    projection_noise: float = Field(0.01, ge=0.0)

    def config_hash(self) -> str:
        """Stable hash of the shape-defining settings."""
        payload = json.dumps({"hash_buckets": self.hash_buckets, "dim": self.dim}, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


class EvaluationConfig(_StrictModel):
    """Which metrics to compute and how ranked groups are formed."""

    metrics: List[str] = Field(default_factory=lambda: ["mrr", "map", "p@1", "ndcg@1"])
    grouping: Literal["group", "pool"] = "group"
    relevance_threshold: float = 0.5


class PfccConfig(_StrictModel):
    """Log-spaced negative sampling over a candidate database."""

    offset: int = Field(100, ge=0)
    oversample_factor: Optional[int] = Field(None, ge=1)
    balance_ratio: float = Field(2.0, ge=1.0)
    emit_triplets: bool = False


class TrainConfig(_StrictModel):
    """Training protocol: optimizer, schedule, loss, shuffling, selection."""

    learning_rate: float = Field(0.01, gt=0.0)
    epochs: int = Field(5, ge=1)
    batch_size: int = Field(16, ge=1)
    warmup_fraction: float = Field(0.1, ge=0.0, lt=1.0)
    bias_correction: bool = True
    weight_decay: float = Field(0.0, ge=0.0)
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = Field(1e-8, gt=0.0)
    loss_variant: LossVariantName = "bsc_masked"
    loss: LossConfig = Field(default_factory=LossConfig)
    shuffle: ShuffleConfig = Field(default_factory=ShuffleConfig)
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    seeds: List[int] = Field(default_factory=lambda: [0])
    dev_metric: str = "mrr"
    positives_only: bool = False
    init_checkpoint: Optional[str] = None
    show_progress: bool = False

    @model_validator(mode="after")
    def _check_batch_size(self) -> "TrainConfig":
        if self.loss_variant in BSC_VARIANTS and self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2 for loss variant '{self.loss_variant}'")
        if not self.seeds:
            raise ValueError("seeds must list at least one seed")
        return self


class RunConfig(_StrictModel):
    """Top-level document of a run configuration file."""

    train: TrainConfig = Field(default_factory=TrainConfig)
    pfcc: PfccConfig = Field(default_factory=PfccConfig)
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"


def _error_keys(exc: PydanticValidationError) -> List[str]:
    keys = []
    for err in exc.errors():
        key = ".".join(str(part) for part in err.get("loc", ()))
        keys.append(key or "<root>")
    return keys


def validate_run_config(data: Optional[Dict[str, Any]]) -> RunConfig:
    """
    Validate a raw configuration mapping.

    Args:
        data: Parsed configuration document (None means all defaults)

    Returns:
        Validated RunConfig

    Raises:
        ConfigValidationError: naming every offending key
    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigValidationError("Configuration document must be a mapping", keys=["<root>"])
    try:
        return RunConfig.model_validate(data)
    except PydanticValidationError as exc:
        keys = _error_keys(exc)
        messages = "; ".join(f"{k}: {e['msg']}" for k, e in zip(keys, exc.errors()))
        raise ConfigValidationError(f"Invalid configuration: {messages}", keys=keys) from exc


def load_run_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Load and validate a run configuration from a YAML or JSON file.

    Args:
        path: Configuration file; None returns the built-in defaults

    Returns:
        Validated RunConfig
    """
    if path is None:
        return RunConfig()

    config_path = Path(path)
    if not config_path.exists():
        raise ConfigValidationError(f"Configuration file not found: {config_path}", keys=[str(config_path)])

    try:
        with open(config_path, 'r', encoding='utf-8') as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigValidationError(f"Could not parse configuration file {config_path}: {e}") from e

    config = validate_run_config(raw)
    logger.debug(f"Loaded run configuration from {config_path}")
    return config


def resolve_config(config: RunConfig) -> Dict[str, Any]:
    """Materialize every default into a plain JSON-compatible mapping."""
    return config.model_dump(mode="json")


def write_resolved_config(config: RunConfig, run_dir: Union[str, Path]) -> Path:
    """
    Snapshot the fully resolved configuration into a run directory.

    Args:
        config: Validated configuration
        run_dir: Run directory (created if needed)

    Returns:
        Path of the written snapshot
    """
    from ..cli.dataset_io import atomic_write_text

    target = Path(run_dir) / "config.resolved.json"
    atomic_write_text(target, json.dumps(resolve_config(config), indent=2, sort_keys=True) + "\n")
    return target
