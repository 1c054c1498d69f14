"""
Batch-softmax contrastive losses.

Key Components:
- PairBatch / LossOutput: batch container and loss result with gradients
- bsc_loss, bsc_loss_masked, mse_loss, combo_loss, triplet_loss: loss family
- normalize / normalize_backward: embedding normalization modes
- GradientChecker: finite-difference verification of every analytic gradient

Usage:
    from src.losses import PairBatch, compute_loss
    from src.common.config_loader import LossConfig

    batch = PairBatch.create(Q, A, labels)
    out = compute_loss("bsc_masked", batch, LossConfig(temperature=0.1))
"""

from .batch_softmax import (
    LOSS_VARIANTS, TEMPERATURE_BOUNDS, PairBatch, LossOutput, bsc_loss, bsc_loss_sum_form,
    bsc_loss_masked, mse_loss, combo_loss, duplicate_aggregated_loss, triplet_loss,
    temperature_from_log, temperature_gradient, compute_loss
)
from .normalization import NORMALIZATION_MODES, normalize, normalize_backward
from .gradient_check import GradientChecker, GradientCheckResult, run_gradient_suite

__all__ = [
    'LOSS_VARIANTS',
    'TEMPERATURE_BOUNDS',
    'PairBatch',
    'LossOutput',
    'bsc_loss',
    'bsc_loss_sum_form',
    'bsc_loss_masked',
    'mse_loss',
    'combo_loss',
    'duplicate_aggregated_loss',
    'triplet_loss',
    'temperature_from_log',
    'temperature_gradient',
    'compute_loss',
    'NORMALIZATION_MODES',
    'normalize',
    'normalize_backward',
    'GradientChecker',
    'GradientCheckResult',
    'run_gradient_suite'
]
