"""
Batch-softmax contrastive (BSC) loss family with analytic gradients.

For a batch of m pairs with embedding matrices Q and A (after normalization)
and temperature tau, S = Q A^T / tau. The per-direction component is

    L0 = (1/m) * sum_i w_i * (logsumexp_j S[i, j] - S[i, i])

and L1 is the same expression over S^T. The unmasked loss uses w_i = 1,
the masked loss w_i = 1[y_i > t]; the divisor stays m in both cases.
All gradients are returned with respect to the un-normalized inputs.

The temperature is parametrized as tau = exp(theta); ``grad_tau`` is dL/dtheta.
"""

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from ..common.config_loader import LossConfig
from ..common.error_handler import AllMaskedError, ContractError, EmptyBatchError, ShapeError
from .dense_core import as_embedding_matrix, matmul_transposed, row_log_sum_exp, row_softmax, log_sum_exp
from .normalization import normalize, normalize_backward

TEMPERATURE_BOUNDS = (1e-3, 10.0)

LOSS_VARIANTS = ("bsc", "bsc_masked", "mse", "combo", "triplet")


@dataclass
class PairBatch:
    """Aligned query/answer embeddings with labels in [0, 1]."""

    Q: np.ndarray
    A: np.ndarray
    labels: np.ndarray

    @classmethod
    def create(cls, Q: Any, A: Any, labels: Optional[Any] = None) -> "PairBatch":
        """
        Validate inputs and build a batch.

        Args:
            Q: (m, n) query embeddings
            A: (m, n) answer embeddings
            labels: length-m labels; all ones when omitted

        Returns:
            PairBatch
        """
        if np.asarray(Q).shape[:1] == (0,) or np.asarray(A).shape[:1] == (0,):
            raise EmptyBatchError("batch has no rows")
        Q = as_embedding_matrix(Q, "Q")
        A = as_embedding_matrix(A, "A")
        if Q.shape != A.shape:
            raise ShapeError(f"Q and A must have the same shape, got {Q.shape} and {A.shape}")
        if labels is None:
            y = np.ones(Q.shape[0], dtype=np.float64)
        else:
            y = np.asarray(labels, dtype=np.float64).ravel()
        if y.shape[0] != Q.shape[0]:
            raise ShapeError(f"expected {Q.shape[0]} labels, got {y.shape[0]}")
        return cls(Q=Q, A=A, labels=y)

    @property
    def size(self) -> int:
        return int(self.Q.shape[0])

    def is_positive(self, threshold: float) -> np.ndarray:
        """Boolean mask of rows with label above the binarization threshold."""
        return self.labels > threshold


@dataclass
class LossOutput:
    """Loss value with gradients for every input."""

    value: float
    grad_Q: np.ndarray
    grad_A: np.ndarray
    grad_tau: float = 0.0
    grad_negative: Optional[np.ndarray] = field(default=None)


def temperature_from_log(theta: float) -> float:
    """tau = exp(theta) clamped to TEMPERATURE_BOUNDS."""
    low, high = TEMPERATURE_BOUNDS
    return float(np.clip(np.exp(theta), low, high))


def _similarities(batch: PairBatch, cfg: LossConfig):
    Qn = normalize(batch.Q, cfg.normalization)
    An = normalize(batch.A, cfg.normalization)
    S = matmul_transposed(Qn, An) / cfg.temperature
    return Qn, An, S


def _directional_term(S: np.ndarray, weights: np.ndarray):
    """Value and dL/dS of (1/m) sum_i w_i (lse_j S[i, j] - S[i, i])."""
    m = S.shape[0]
    value = float(np.sum(weights * (row_log_sum_exp(S) - np.diag(S))) / m)
    grad = weights[:, None] * (row_softmax(S) - np.eye(m)) / m
    return value, grad


def _contrastive(batch: PairBatch, cfg: LossConfig, weights: np.ndarray) -> LossOutput:
    Qn, An, S = _similarities(batch, cfg)
    tau = cfg.temperature

    value, grad_S = _directional_term(S, weights)
    if cfg.symmetrize:
        value_1, grad_T = _directional_term(S.T, weights)
        value += value_1
        grad_S = grad_S + grad_T.T

    grad_Qn = grad_S @ An / tau
    grad_An = grad_S.T @ Qn / tau
    grad_theta = -float(np.sum(grad_S * S)) if cfg.temperature_trainable else 0.0

    return LossOutput(
        value=value,
        grad_Q=normalize_backward(batch.Q, cfg.normalization, grad_Qn),
        grad_A=normalize_backward(batch.A, cfg.normalization, grad_An),
        grad_tau=grad_theta,
    )


def bsc_loss(batch: PairBatch, cfg: LossConfig) -> LossOutput:
    """
    Unmasked BSC loss: every pair in the batch is a positive.

    Returns L0 + L1 when ``cfg.symmetrize`` is set, L0 otherwise.
    """
    return _contrastive(batch, cfg, np.ones(batch.size))


def bsc_loss_sum_form(batch: PairBatch, cfg: LossConfig) -> float:
    """
    L0 evaluated through its explicit sum form.

        -(1/(m tau)) sum_i q_i.a_i + (1/m) sum_i log sum_j exp(q_i.a_j / tau)
    """
    Qn = normalize(batch.Q, cfg.normalization)
    An = normalize(batch.A, cfg.normalization)
    m = batch.size
    tau = cfg.temperature

    positive_sum = 0.0
    lse_sum = 0.0
    for i in range(m):
        positive_sum += float(np.dot(Qn[i], An[i]))
        row = np.array([np.dot(Qn[i], An[j]) / tau for j in range(m)])
        lse_sum += log_sum_exp(row)

    return -positive_sum / (m * tau) + lse_sum / m


def bsc_loss_masked(batch: PairBatch, cfg: LossConfig) -> LossOutput:
    """
    BSC loss with labeled negatives masked out of their own rows.

    Rows with y_i <= t contribute neither a numerator nor a log-sum-exp term,
    but their embeddings still appear as in-batch negatives for other rows.
    """
    weights = batch.is_positive(cfg.threshold).astype(np.float64)
    if not np.any(weights):
        raise AllMaskedError(f"no pair in the batch has a label above threshold {cfg.threshold}")
    return _contrastive(batch, cfg, weights)


def mse_loss(batch: PairBatch, cfg: LossConfig) -> LossOutput:
    """Mean squared error between diagonal similarities and targets."""
    Qn = normalize(batch.Q, cfg.normalization)
    An = normalize(batch.A, cfg.normalization)
    m = batch.size

    residual = np.sum(Qn * An, axis=1) - batch.labels
    value = float(np.mean(residual ** 2))
    coeff = (2.0 * residual / m)[:, None]

    return LossOutput(
        value=value,
        grad_Q=normalize_backward(batch.Q, cfg.normalization, coeff * An),
        grad_A=normalize_backward(batch.A, cfg.normalization, coeff * Qn),
    )


def combo_loss(batch: PairBatch, cfg: LossConfig) -> LossOutput:
    """mu * masked BSC + (1 - mu) * MSE on the same batch."""
    mu = cfg.combo_weight
    if mu == 1.0:
        return bsc_loss_masked(batch, cfg)
    if mu == 0.0:
        return mse_loss(batch, cfg)

    contrastive = bsc_loss_masked(batch, cfg)
    pointwise = mse_loss(batch, cfg)
    return LossOutput(
        value=mu * contrastive.value + (1.0 - mu) * pointwise.value,
        grad_Q=mu * contrastive.grad_Q + (1.0 - mu) * pointwise.grad_Q,
        grad_A=mu * contrastive.grad_A + (1.0 - mu) * pointwise.grad_A,
        grad_tau=mu * contrastive.grad_tau,
    )


def duplicate_aggregated_loss(batch: PairBatch, cfg: LossConfig) -> float:
    """
    BSC loss with every positive of a repeated query in the numerator.

    Rows whose raw query embeddings are exactly equal form a group P_q; each
    row's numerator term becomes the mean similarity over the group's
    answers. The log-sum-exp terms are unchanged. The group sums telescope,
    so the value equals the plain per-pair loss.
    """
    _, _, S = _similarities(batch, cfg)
    m = batch.size
    _, group_of = np.unique(batch.Q, axis=0, return_inverse=True)
    group_of = np.asarray(group_of).ravel()
    same_group = (group_of[:, None] == group_of[None, :]).astype(np.float64)
    group_sizes = same_group.sum(axis=1)

    numerator_0 = np.sum(S * same_group, axis=1) / group_sizes
    value = float(np.sum(row_log_sum_exp(S) - numerator_0) / m)

    if cfg.symmetrize:
        numerator_1 = np.sum(S * same_group, axis=0) / group_sizes
        value += float(np.sum(row_log_sum_exp(S.T) - numerator_1) / m)

    return value


def triplet_loss(anchor: Any, positive: Any, negative: Any, margin: float) -> LossOutput:
    """
    Mean hinge max(0, d(a, p) - d(a, n) + margin) with Euclidean d.

    ``grad_Q`` holds the anchor gradient, ``grad_A`` the positive gradient and
    ``grad_negative`` the negative gradient. Inactive rows and zero distances
    get a zero subgradient.
    """
    anchor = as_embedding_matrix(anchor, "anchor")
    positive = as_embedding_matrix(positive, "positive")
    negative = as_embedding_matrix(negative, "negative")
    if not (anchor.shape == positive.shape == negative.shape):
        raise ShapeError(
            f"triplet shapes differ: anchor {anchor.shape}, positive {positive.shape}, negative {negative.shape}"
        )

    m = anchor.shape[0]
    diff_pos = anchor - positive
    diff_neg = anchor - negative
    dist_pos = np.sqrt(np.sum(diff_pos ** 2, axis=1))
    dist_neg = np.sqrt(np.sum(diff_neg ** 2, axis=1))
    hinge = dist_pos - dist_neg + margin
    active = (hinge > 0.0).astype(np.float64)

    unit_pos = np.divide(diff_pos, dist_pos[:, None], out=np.zeros_like(diff_pos), where=dist_pos[:, None] > 0)
    unit_neg = np.divide(diff_neg, dist_neg[:, None], out=np.zeros_like(diff_neg), where=dist_neg[:, None] > 0)
    scale = (active / m)[:, None]

    return LossOutput(
        value=float(np.sum(np.maximum(hinge, 0.0)) / m),
        grad_Q=scale * (unit_pos - unit_neg),
        grad_A=-scale * unit_pos,
        grad_negative=scale * unit_neg,
    )


def temperature_gradient(batch: PairBatch, cfg: LossConfig) -> float:
    """
    dL/dtheta of the (masked) BSC loss for tau = exp(theta).

    With all labels above the threshold the masked loss is the plain loss.
    """
    if not cfg.temperature_trainable:
        raise ContractError("temperature_gradient requires temperature_trainable to be enabled")
    return bsc_loss_masked(batch, cfg).grad_tau


def compute_loss(variant: str, batch: PairBatch, cfg: LossConfig) -> LossOutput:
    """
    Dispatch a pair loss by name.

    Args:
        variant: One of "bsc", "bsc_masked", "mse", "combo"
        batch: Pair batch
        cfg: Loss configuration

    Returns:
        LossOutput
    """
    if variant == "bsc":
        return bsc_loss(batch, cfg)
    if variant == "bsc_masked":
        return bsc_loss_masked(batch, cfg)
    if variant == "mse":
        return mse_loss(batch, cfg)
    if variant == "combo":
        return combo_loss(batch, cfg)
    if variant == "triplet":
        raise ContractError("the triplet loss takes (anchor, positive, negative) matrices; call triplet_loss")
    raise ContractError(f"Unknown loss variant '{variant}'; expected one of {LOSS_VARIANTS}")
