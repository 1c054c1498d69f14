"""
Central finite-difference checks for every hand-written gradient.

Each check perturbs one input entry at a time by +/- step, compares the
numeric derivative with the analytic one and reports the relative error
||analytic - numeric|| / max(||analytic||, ||numeric||).
"""

import itertools
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from ..common.config_loader import EncoderConfig, LossConfig
from .batch_softmax import PairBatch, compute_loss, triplet_loss
from .normalization import NORMALIZATION_MODES

PAIR_VARIANTS = ("bsc", "bsc_masked", "mse", "combo")


@dataclass
class GradientCheckResult:
    """Outcome of one finite-difference comparison."""

    name: str
    relative_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.relative_error <= self.tolerance

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "relative_error": self.relative_error,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def relative_error(analytic: Any, numeric: Any) -> float:
    """Norm of the difference relative to the larger of the two norms; 0 when both vanish."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def numeric_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """
    Central-difference gradient of a scalar function.

    Args:
        fn: Function of an array returning a float
        x: Point at which to differentiate (not modified)
        step: Perturbation size

    Returns:
        Array shaped like x
    """
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        original = x[idx]
        x[idx] = original + step
        plus = fn(x)
        x[idx] = original - step
        minus = fn(x)
        x[idx] = original
        grad[idx] = (plus - minus) / (2.0 * step)
    return grad


class GradientChecker:
    """
    Runs finite-difference checks over loss variants, normalization modes,
    the trainable temperature and the encoder chain.
    """

    def __init__(self, config: Optional[Dict[str, Any]] = None, **kwargs):
        """
        Initialize the GradientChecker.

        Args:
            config: Optional configuration dictionary
            **kwargs: Additional configuration parameters
        """
        self.config = config or {}
        self.logger = logger

        self.default_config = {
            "step": 1e-5,
            "tolerance": 1e-6,
            "encoder_tolerance": 1e-5,
            "batch_size": 4,
            "dim": 5,
            "temperature": 0.5,
            "combo_weight": 0.5,
            "triplet_margin": 0.5,
            "seed": 0,
            "encoder_buckets": 64,
            "encoder_dim": 16,
        }

        for key, value in self.default_config.items():
            if key not in self.config:
                self.config[key] = value

        for key, value in kwargs.items():
            self.config[key] = value

        self.rng = np.random.default_rng(self.config["seed"])

    def _random_batch(self) -> PairBatch:
        m, n = self.config["batch_size"], self.config["dim"]
        Q = self.rng.standard_normal((m, n))
        A = self.rng.standard_normal((m, n))
        labels = self.rng.uniform(0.0, 1.0, size=m)
        labels[0] = 1.0
        return PairBatch.create(Q, A, labels)

    def _loss_config(self, normalization: str, trainable: bool, symmetrize: bool = True) -> LossConfig:
        return LossConfig(
            temperature=self.config["temperature"],
            combo_weight=self.config["combo_weight"],
            normalization=normalization,
            symmetrize=symmetrize,
            temperature_trainable=trainable,
        )

    def check_pair_loss(
        self, variant: str, normalization: str, trainable: bool = False, symmetrize: bool = True
    ) -> List[GradientCheckResult]:
        """Check grad_Q, grad_A (and grad_tau when trainable) of one pair loss."""
        batch = self._random_batch()
        cfg = self._loss_config(normalization, trainable, symmetrize)
        step = self.config["step"]
        tol = self.config["tolerance"]
        name = f"{variant}/{normalization}/{'sym' if symmetrize else 'L0'}"
        output = compute_loss(variant, batch, cfg)

        def loss_of_Q(Q: np.ndarray) -> float:
            return compute_loss(variant, PairBatch(Q=Q, A=batch.A, labels=batch.labels), cfg).value

        def loss_of_A(A: np.ndarray) -> float:
            return compute_loss(variant, PairBatch(Q=batch.Q, A=A, labels=batch.labels), cfg).value

        results = [
            GradientCheckResult(f"{name}/grad_Q", relative_error(output.grad_Q, numeric_gradient(loss_of_Q, batch.Q, step)), tol),
            GradientCheckResult(f"{name}/grad_A", relative_error(output.grad_A, numeric_gradient(loss_of_A, batch.A, step)), tol),
        ]

        if trainable:
            theta = np.array([np.log(cfg.temperature)])

            def loss_of_theta(t: np.ndarray) -> float:
                shifted = cfg.model_copy(update={"temperature": float(np.exp(t[0]))})
                return compute_loss(variant, batch, shifted).value

            numeric = numeric_gradient(loss_of_theta, theta, step)
            results.append(GradientCheckResult(f"{name}/grad_tau", relative_error([output.grad_tau], numeric), tol))

        return results

    def check_triplet(self) -> List[GradientCheckResult]:
        """Check the three triplet gradients on a batch with active and inactive rows."""
        m, n = self.config["batch_size"], self.config["dim"]
        anchor = self.rng.standard_normal((m, n))
        positive = self.rng.standard_normal((m, n))
        negative = self.rng.standard_normal((m, n))
        margin = self.config["triplet_margin"]
        step = self.config["step"]
        tol = self.config["tolerance"]
        output = triplet_loss(anchor, positive, negative, margin)

        checks = (
            ("anchor", anchor, output.grad_Q, lambda x: triplet_loss(x, positive, negative, margin).value),
            ("positive", positive, output.grad_A, lambda x: triplet_loss(anchor, x, negative, margin).value),
            ("negative", negative, output.grad_negative, lambda x: triplet_loss(anchor, positive, x, margin).value),
        )
        return [
            GradientCheckResult(f"triplet/{label}", relative_error(analytic, numeric_gradient(fn, point, step)), tol)
            for label, point, analytic, fn in checks
        ]

    def check_encoder_chain(self, variant: str = "bsc_masked", normalization: str = "row_l2") -> List[GradientCheckResult]:
        """
        Check loss -> normalization -> encoder parameters end to end.

        Gradients from the query and answer sides are summed into the shared
        parameters before comparison.
        """
        from ..training.encoder import EncoderModel, siamese_backward

        encoder_config = EncoderConfig(
            hash_buckets=self.config["encoder_buckets"], dim=self.config["encoder_dim"], init_scale=0.5, projection_noise=0.3
        )
        model = EncoderModel.initialize(encoder_config, seed=self.config["seed"])
        texts_q = ["red apple pie", "green pear tart", "blue plum jam", "ripe fig cake"]
        texts_a = ["apple pie recipe", "pear tart recipe", "plum jam jar", "fig cake slice"]
        labels = np.array([1.0, 1.0, 0.0, 1.0])
        cfg = self._loss_config(normalization, trainable=False)
        step = self.config["step"]
        tol = self.config["encoder_tolerance"]

        def loss_with(parameters: Dict[str, np.ndarray]):
            candidate = EncoderModel(encoder_config, parameters)
            batch = PairBatch.create(candidate.encode_batch(texts_q), candidate.encode_batch(texts_a), labels)
            return compute_loss(variant, batch, cfg)

        output = loss_with(model.parameters)
        analytic = siamese_backward(model, texts_q, texts_a, output.grad_Q, output.grad_A)

        results = []
        for name, value in model.parameters.items():
            def loss_of_param(x: np.ndarray, name: str = name) -> float:
                params = dict(model.parameters)
                params[name] = x
                return loss_with(params).value

            numeric = numeric_gradient(loss_of_param, value, step)
            results.append(GradientCheckResult(f"encoder/{variant}/{name}", relative_error(analytic[name], numeric), tol))
        return results

    def run_suite(self) -> List[GradientCheckResult]:
        """Every pair variant x normalization mode x trainable temperature, plus triplet and encoder chain."""
        results: List[GradientCheckResult] = []
        for variant, mode, trainable in itertools.product(PAIR_VARIANTS, NORMALIZATION_MODES, (False, True)):
            results.extend(self.check_pair_loss(variant, mode, trainable))
        results.extend(self.check_pair_loss("bsc", "row_l2", trainable=True, symmetrize=False))
        results.extend(self.check_triplet())
        results.extend(self.check_encoder_chain())

        failed = [r for r in results if not r.passed]
        if failed:
            for result in failed:
                self.logger.error(
                    f"Gradient check failed: {result.name} relative error {result.relative_error:.3e} > {result.tolerance:.0e}"
                )
        self.logger.info(f"Gradient suite: {len(results) - len(failed)}/{len(results)} checks passed")
        return results


def run_gradient_suite(config: Optional[Dict[str, Any]] = None) -> Tuple[List[GradientCheckResult], bool]:
    """
    Run the full finite-difference suite.

    Returns:
        Tuple of (per-check results, whether every check passed)
    """
    results = GradientChecker(config).run_suite()
    return results, all(r.passed for r in results)
