"""
Shared test fixtures for the batch-softmax contrastive toolkit.
"""

import shutil
import tempfile
from pathlib import Path
from typing import List

import numpy as np
import pytest
from loguru import logger

from src.batching.records import PairRecord
from src.common.config_loader import EncoderConfig, LossConfig, TrainConfig
from src.training.encoder import EncoderModel


@pytest.fixture(autouse=True)
def quiet_logs():
    """Route library logs to nowhere unless a test installs its own sink."""
    logger.remove()
    yield
    logger.remove()


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files."""
    path = tempfile.mkdtemp()
    yield Path(path)
    shutil.rmtree(path, ignore_errors=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def identity_2x2():
    return np.eye(2)


@pytest.fixture
def plain_loss_config():
    """tau = 1, no normalization, symmetric."""
    return LossConfig(temperature=1.0, normalization="none", symmetrize=True)


@pytest.fixture
def small_encoder_config():
    return EncoderConfig(hash_buckets=128, dim=8, init_scale=0.3, projection_noise=0.1)


@pytest.fixture
def small_encoder(small_encoder_config):
    return EncoderModel.initialize(small_encoder_config, seed=0)


@pytest.fixture
def sample_records() -> List[PairRecord]:
    """Six training pairs over three topics, one labeled negative."""
    return [
        PairRecord("r1", "how do plants grow", "plants grow with sunlight and water", 1.0, "g1"),
        PairRecord("r2", "how do plants grow", "cars need fuel to run", 0.0, "g1"),
        PairRecord("r3", "what is a star", "a star is a ball of hot gas", 1.0, "g2"),
        PairRecord("r4", "why is the sky blue", "sunlight scatters in the air", 1.0, "g3"),
        PairRecord("r5", "what do cats eat", "cats eat fish and meat", 1.0, "g4"),
        PairRecord("r6", "when do birds migrate", "birds migrate in autumn", 1.0, "g5"),
    ]


@pytest.fixture
def dev_records() -> List[PairRecord]:
    return [
        PairRecord("d1", "how do plants grow", "plants need sunlight", 1.0, "g1", split="dev"),
        PairRecord("d2", "what is a star", "stars are hot gas", 1.0, "g2", split="dev"),
        PairRecord("d3", "what do cats eat", "cats like fish", 1.0, "g4", split="dev"),
    ]


@pytest.fixture
def tiny_train_config(small_encoder_config):
    """Fast training configuration for unit tests."""
    return TrainConfig(
        learning_rate=0.05,
        epochs=2,
        batch_size=3,
        loss_variant="bsc_masked",
        loss=LossConfig(temperature=0.1, normalization="row_l2"),
        shuffle={"mode": "random", "group_size": 2, "candidate_pool": 4},
        encoder=small_encoder_config,
        evaluation={"metrics": ["mrr"], "grouping": "pool"},
        seeds=[0],
        dev_metric="mrr",
    )
