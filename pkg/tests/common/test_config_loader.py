"""
Tests for run configuration loading and validation.
"""

import json

import numpy as np
import pytest

from src.common.config_loader import (
    DEFAULT_CONFIG_PATH, EncoderConfig, RunConfig, ShuffleConfig, TrainConfig,
    load_run_config, resolve_config, validate_run_config, write_resolved_config
)
from src.common.error_handler import AllMaskedError, ConfigValidationError
from src.losses.batch_softmax import PairBatch, bsc_loss_masked

from .test_base import CommonTestBase


@pytest.mark.unit
class TestValidateRunConfig(CommonTestBase):
    """Test cases for schema validation."""

    def test_empty_document_gives_defaults(self):
        config = validate_run_config(None)
        assert config == RunConfig()
        assert config.train.loss.temperature == 0.1
        assert config.train.shuffle.mode == "example_knn"

    def test_unknown_key_is_named(self):
        with pytest.raises(ConfigValidationError) as exc_info:
            validate_run_config({"train": {"learning_rte": 0.1}})
        assert "train.learning_rte" in exc_info.value.keys

    def test_out_of_range_value_is_rejected(self):
        with pytest.raises(ConfigValidationError) as exc_info:
            validate_run_config({"train": {"loss": {"combo_weight": 1.5}}})
        assert "train.loss.combo_weight" in exc_info.value.keys

    def test_bsc_variants_need_two_rows_per_batch(self):
        with pytest.raises(ConfigValidationError):
            validate_run_config({"train": {"batch_size": 1, "loss_variant": "bsc"}})
        config = validate_run_config({"train": {"batch_size": 1, "loss_variant": "mse"}})
        assert config.train.batch_size == 1

    def test_candidate_pool_must_cover_group(self):
        with pytest.raises(ValueError):
            ShuffleConfig(group_size=10, candidate_pool=3)

    def test_non_mapping_document(self):
        with pytest.raises(ConfigValidationError):
            validate_run_config(["not", "a", "mapping"])


@pytest.mark.unit
class TestLoadRunConfig(CommonTestBase):
    """Test cases for reading configuration files."""

    def test_defaults_without_path(self):
        assert load_run_config(None) == RunConfig()

    def test_yaml_file(self, write_config):
        path = write_config({"train": {"epochs": 3, "shuffle": {"mode": "words"}}})
        config = load_run_config(path)
        assert config.train.epochs == 3
        assert config.train.shuffle.mode == "words"
        assert config.train.batch_size == TrainConfig().batch_size

    def test_json_file(self, write_config):
        path = write_config({"train": {"learning_rate": 0.5}}, name="run.json")
        assert load_run_config(path).train.learning_rate == 0.5

    def test_missing_file(self, temp_dir):
        with pytest.raises(ConfigValidationError, match="not found"):
            load_run_config(temp_dir / "absent.yaml")

    def test_shipped_default_config_is_valid(self):
        path = DEFAULT_CONFIG_PATH
        if not path.exists():
            pytest.skip("run from the repository root to check the shipped configuration")
        config = load_run_config(path)
        assert config.train.loss_variant == "bsc_masked"

    def test_shipped_threshold_masks_labels_equal_to_it(self):
        path = DEFAULT_CONFIG_PATH
        if not path.exists():
            pytest.skip("run from the repository root to check the shipped configuration")
        loss = load_run_config(path).train.loss
        at_threshold = PairBatch.create(np.eye(2), np.eye(2), [loss.threshold, loss.threshold])
        with pytest.raises(AllMaskedError):
            bsc_loss_masked(at_threshold, loss)
        above = PairBatch.create(np.eye(2), np.eye(2), [loss.threshold + 0.01, loss.threshold])
        assert bsc_loss_masked(above, loss).value > 0.0


@pytest.mark.unit
class TestResolvedConfig(CommonTestBase):
    """Test cases for the resolved configuration snapshot."""

    def test_snapshot_materializes_defaults(self, temp_dir):
        target = write_resolved_config(RunConfig(), temp_dir / "run")
        data = json.loads(target.read_text(encoding="utf-8"))
        assert data == resolve_config(RunConfig())
        assert data["train"]["encoder"]["hash_buckets"] == 4096
        assert data["train"]["betas"] == [0.9, 0.999]

    def test_encoder_hash_depends_on_shape_only(self):
        a = EncoderConfig(hash_buckets=64, dim=8, init_scale=0.1)
        b = EncoderConfig(hash_buckets=64, dim=8, init_scale=0.9)
        c = EncoderConfig(hash_buckets=64, dim=9)
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()
