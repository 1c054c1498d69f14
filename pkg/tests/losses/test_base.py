"""
Base test class for loss tests.
"""

import math

import numpy as np
import pytest

from src.common.config_loader import LossConfig
from src.losses.batch_softmax import PairBatch


class LossTestBase:
    """Base class for loss tests with reference formulas."""

    @staticmethod
    def loss_config(**overrides) -> LossConfig:
        values = {"temperature": 1.0, "normalization": "none", "symmetrize": True}
        values.update(overrides)
        return LossConfig(**values)

    @staticmethod
    def random_batch(rng, m: int = 5, n: int = 4, labels=None) -> PairBatch:
        return PairBatch.create(rng.standard_normal((m, n)), rng.standard_normal((m, n)), labels)

    @staticmethod
    def direct_l0(Q: np.ndarray, A: np.ndarray, tau: float, weights=None) -> float:
        """Row-by-row evaluation with math.exp and math.log."""
        m = Q.shape[0]
        weights = np.ones(m) if weights is None else weights
        total = 0.0
        for i in range(m):
            sims = [float(Q[i] @ A[j]) / tau for j in range(m)]
            total += weights[i] * (math.log(sum(math.exp(s) for s in sims)) - sims[i])
        return total / m

    @pytest.fixture
    def identity_batch(self):
        return PairBatch.create(np.eye(2), np.eye(2))
