"""
AdamW with optional bias correction and a linear warm-up schedule.

Parameters are plain dicts of numpy arrays keyed by name. Weight decay is
decoupled from the adaptive update and skipped for bias-like parameters.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..common.config_loader import TrainConfig
from ..common.error_handler import ContractError, DivergenceError, ShapeError

NO_DECAY_PARAMETERS = ("bias", "log_temperature")


def warmup_steps(total_steps: int, warmup_fraction: float) -> int:
    """W = ceil(warmup_fraction * total_steps)."""
    return int(math.ceil(warmup_fraction * total_steps))


def warmup_learning_rate(step: int, total_steps: int, learning_rate: float, warmup_fraction: float) -> float:
    """
    Learning rate at a 1-based optimizer step.

    Rises linearly as lr * step / W for step <= W, then stays at lr.
    """
    if step < 1:
        raise ContractError(f"optimizer steps are 1-based, got {step}")
    W = warmup_steps(total_steps, warmup_fraction)
    if W == 0 or step > W:
        return learning_rate
    return learning_rate * step / W


@dataclass
class AdamWState:
    """First and second moment estimates plus the number of steps taken."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Dict[str, np.ndarray]) -> "AdamWState":
        return cls(
            m={k: np.zeros_like(p, dtype=np.float64) for k, p in params.items()},
            v={k: np.zeros_like(p, dtype=np.float64) for k, p in params.items()},
        )

    def as_arrays(self) -> Dict[str, Dict[str, np.ndarray]]:
        return {"m": self.m, "v": self.v}


def adamw_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamWState,
    step_index: int,
    cfg: TrainConfig,
    total_steps: Optional[int] = None,
    schedule_step: Optional[int] = None,
) -> Tuple[Dict[str, np.ndarray], AdamWState]:
    """
    One AdamW update.

        m <- b1 m + (1 - b1) g
        v <- b2 v + (1 - b2) g^2
        p <- p (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)

    m_hat and v_hat are bias-corrected only when ``cfg.bias_correction`` is set.

    Args:
        params: Parameter arrays
        grads: Gradients with the same keys and shapes
        state: Moment state from the previous step
        step_index: 1-based step number
        cfg: Training configuration (learning rate, betas, eps, decay)
        total_steps: When given, the learning rate follows the warm-up schedule
        schedule_step: 1-based position in the schedule; defaults to step_index

    Returns:
        Tuple of (new parameters, new state)

    Raises:
        DivergenceError: if any gradient is non-finite
    """
    if set(params) != set(grads):
        raise ShapeError(f"parameter keys {sorted(params)} do not match gradient keys {sorted(grads)}")

    for name, grad in grads.items():
        if np.shape(grad) != np.shape(params[name]):
            raise ShapeError(f"gradient '{name}' has shape {np.shape(grad)}, expected {np.shape(params[name])}")
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(f"non-finite gradient for '{name}'", step_index=step_index)

    if total_steps is None:
        lr = cfg.learning_rate
    else:
        position = step_index if schedule_step is None else schedule_step
        lr = warmup_learning_rate(position, total_steps, cfg.learning_rate, cfg.warmup_fraction)

    beta1, beta2 = cfg.betas
    new_params: Dict[str, np.ndarray] = {}
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}

    for name, param in params.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        m = beta1 * state.m.get(name, np.zeros_like(grad)) + (1.0 - beta1) * grad
        v = beta2 * state.v.get(name, np.zeros_like(grad)) + (1.0 - beta2) * grad * grad

        if cfg.bias_correction:
            m_hat = m / (1.0 - beta1 ** step_index)
            v_hat = v / (1.0 - beta2 ** step_index)
        else:
            m_hat, v_hat = m, v

        decay = 0.0 if name in NO_DECAY_PARAMETERS else cfg.weight_decay
        updated = param * (1.0 - lr * decay) - lr * m_hat / (np.sqrt(v_hat) + cfg.eps)

        new_params[name] = updated
        new_m[name] = m
        new_v[name] = v

    return new_params, AdamWState(m=new_m, v=new_v, step=step_index)
