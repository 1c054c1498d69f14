"""
Training protocol for the Siamese encoder.

Every epoch re-encodes the training pairs with the current model, shuffles
them with the configured mode, slices consecutive batches, takes one AdamW
step per batch (linear warm-up, then a constant rate), writes a checkpoint
and scores the dev split. The epoch with the best dev score is selected.
The warm-up counts batch slots: a batch skipped because all of its pairs
are labeled negatives advances the schedule without an update.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from tqdm import tqdm

from ..batching.records import PairRecord, Triplet, build_triplets, check_unique_ids
from ..batching.shuffler import Shuffler, batches_from_sequence, iter_texts
from ..common.config_loader import BSC_VARIANTS, TrainConfig
from ..common.error_handler import (
    AllMaskedError,
    BSCError,
    ContractError,
    DivergenceError,
    ErrorClassifier,
    SeedSearchError,
)
from ..common.structured_logger import structured_logger
from ..evaluation.evaluator import Evaluator
from ..losses.batch_softmax import TEMPERATURE_BOUNDS, LossOutput, PairBatch, compute_loss, temperature_from_log, triplet_loss
from .encoder import EncoderModel, load_checkpoint, save_checkpoint, siamese_backward
from .optimizer import AdamWState, adamw_step


@dataclass
class EpochRecord:
    """What happened in one epoch."""

    epoch: int
    mean_loss: float
    dev_score: float
    steps: int
    skipped_batches: int
    temperature: float
    checkpoint_path: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epoch": self.epoch,
            "mean_loss": self.mean_loss,
            "dev_score": self.dev_score,
            "steps": self.steps,
            "skipped_batches": self.skipped_batches,
            "temperature": self.temperature,
            "checkpoint_path": self.checkpoint_path,
        }


@dataclass
class TrainRun:
    """History of one training run and the selected epoch."""

    seed: int
    dev_metric: str
    epochs: List[EpochRecord] = field(default_factory=list)
    selected_epoch: int = 0
    run_dir: Optional[str] = None
    model: Optional[EncoderModel] = field(default=None, repr=False)
    seed_scores: Dict[int, float] = field(default_factory=dict)

    @property
    def dev_scores(self) -> List[float]:
        return [e.dev_score for e in self.epochs]

    @property
    def checkpoint_paths(self) -> List[Optional[str]]:
        return [e.checkpoint_path for e in self.epochs]

    @property
    def best_dev_score(self) -> float:
        return self.epochs[self.selected_epoch - 1].dev_score

    @property
    def selected_checkpoint(self) -> Optional[str]:
        return self.epochs[self.selected_epoch - 1].checkpoint_path

    @property
    def selected_seed(self) -> int:
        return self.seed

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "dev_metric": self.dev_metric,
            "selected_epoch": self.selected_epoch,
            "best_dev_score": self.best_dev_score,
            "selected_checkpoint": self.selected_checkpoint,
            "seed_scores": {str(k): v for k, v in self.seed_scores.items()},
            "epochs": [e.to_dict() for e in self.epochs],
        }


def select_epoch(dev_scores: Sequence[float]) -> int:
    """1-based epoch with the highest dev score; the earliest wins ties."""
    if not dev_scores:
        raise ContractError("no epochs to select from")
    return int(np.argmax(np.asarray(dev_scores))) + 1


def epoch_seed(run_seed: int, shuffle_seed: int, epoch: int) -> int:
    """Shuffle seed of one epoch, derived from the run seed."""
    return int(np.random.SeedSequence([run_seed, shuffle_seed, epoch]).generate_state(1)[0])


def steps_per_epoch(n_units: int, batch_size: int, min_last_batch: int) -> int:
    full, rest = divmod(n_units, batch_size)
    return full + (1 if rest and rest >= min_last_batch else 0)


def project_log_temperature(params: Dict[str, np.ndarray], state: AdamWState) -> float:
    """
    Clip log tau into TEMPERATURE_BOUNDS in place.

    A clipped value also restarts its Adam moments.
    """
    low, high = (math.log(b) for b in TEMPERATURE_BOUNDS)
    raw = float(params["log_temperature"])
    clipped = min(max(raw, low), high)
    if clipped != raw:
        params["log_temperature"] = np.array(clipped)
        state.m["log_temperature"] = np.zeros(())
        state.v["log_temperature"] = np.zeros(())
    return clipped


class Trainer:
    """
    Runs the training protocol for one seed.

    The configuration is a TrainConfig; keyword arguments override its
    top-level keys.
    """

    def __init__(self, config: Optional[Union[TrainConfig, Dict[str, Any]]] = None, **kwargs):
        """
        Initialize the Trainer.

        Args:
            config: TrainConfig or mapping of its keys
            **kwargs: Additional configuration parameters
        """
        self.logger = logger
        if isinstance(config, TrainConfig):
            base = config.model_dump()
        else:
            base = dict(config or {})
        base.update(kwargs)
        self.config = TrainConfig(**base)

        self.evaluator = Evaluator(self.config.evaluation.model_dump())
        self.min_last_batch = 2 if self.config.loss_variant in BSC_VARIANTS else 1

    def _initial_model(self, seed: int, model: Optional[EncoderModel]) -> EncoderModel:
        if model is not None:
            return model.copy()
        if self.config.init_checkpoint:
            checkpoint = load_checkpoint(self.config.init_checkpoint, expected_config=self.config.encoder)
            self.logger.info(f"Starting from checkpoint {self.config.init_checkpoint}")
            return checkpoint.model
        return EncoderModel.initialize(self.config.encoder, seed=seed)

    def _training_records(self, records: Sequence[PairRecord]) -> List[PairRecord]:
        kept = list(records)
        if self.config.positives_only:
            threshold = self.config.loss.threshold
            kept = [r for r in kept if r.label > threshold]
            self.logger.info(f"Positives-only training keeps {len(kept)} of {len(records)} pairs")
        return kept

    def _pair_step(
        self, model: EncoderModel, batch_records: Sequence[PairRecord], log_temperature: float
    ) -> Tuple[LossOutput, Dict[str, np.ndarray]]:
        texts_q = [r.text_q for r in batch_records]
        texts_a = [r.text_a for r in batch_records]
        loss_cfg = self.config.loss.model_copy(update={"temperature": temperature_from_log(log_temperature)})
        batch = PairBatch.create(
            model.encode_batch(texts_q), model.encode_batch(texts_a), [r.label for r in batch_records]
        )
        output = compute_loss(self.config.loss_variant, batch, loss_cfg)
        grads = siamese_backward(model, texts_q, texts_a, output.grad_Q, output.grad_A)
        return output, grads

    def _triplet_step(self, model: EncoderModel, batch_triplets: Sequence[Triplet]) -> Tuple[LossOutput, Dict[str, np.ndarray]]:
        anchors = [t.anchor for t in batch_triplets]
        positives = [t.positive for t in batch_triplets]
        negatives = [t.negative for t in batch_triplets]
        output = triplet_loss(
            model.encode_batch(anchors),
            model.encode_batch(positives),
            model.encode_batch(negatives),
            self.config.loss.triplet_margin,
        )
        parts = (
            model.backward(anchors, output.grad_Q),
            model.backward(positives, output.grad_A),
            model.backward(negatives, output.grad_negative),
        )
        return output, {name: parts[0][name] + parts[1][name] + parts[2][name] for name in parts[0]}

    def _epoch_batches(self, records: List[PairRecord], triplets: List[Triplet], model: EncoderModel, seed: int, epoch: int):
        cfg = self.config
        shuffle_seed = epoch_seed(seed, cfg.shuffle.seed, epoch)

        if cfg.loss_variant == "triplet":
            order = np.random.default_rng(shuffle_seed).permutation(len(triplets))
            return [[triplets[i] for i in order[s:s + cfg.batch_size]] for s in range(0, len(order), cfg.batch_size)]

        shuffler = Shuffler.from_config(cfg.shuffle, seed=shuffle_seed)
        embeddings = None
        if shuffler.requires_embeddings:
            embeddings = model.encode_batch(iter_texts(records, cfg.shuffle.element))
        sequence = shuffler.shuffle(records, embeddings)
        by_id = {r.record_id: r for r in records}
        return [
            [by_id[rid] for rid in ids]
            for ids in batches_from_sequence(sequence, cfg.batch_size, self.min_last_batch)
        ]

    def train(
        self,
        train_records: Sequence[PairRecord],
        dev_records: Sequence[PairRecord],
        model: Optional[EncoderModel] = None,
        seed: Optional[int] = None,
        run_dir: Optional[Union[str, Path]] = None,
    ) -> TrainRun:
        """
        Train one model.

        Args:
            train_records: Training pairs
            dev_records: Dev pairs used for checkpoint selection
            model: Starting model; initialized from the seed (or init_checkpoint) when omitted
            seed: Run seed; defaults to the first configured seed
            run_dir: Directory for checkpoints and the metrics history

        Returns:
            TrainRun with the selected epoch's model attached

        Raises:
            DivergenceError: on a non-finite loss or gradient
        """
        cfg = self.config
        seed = cfg.seeds[0] if seed is None else seed
        records = self._training_records(train_records)
        if not records:
            raise ContractError("training set is empty")
        if not dev_records:
            raise ContractError("dev set is empty")
        check_unique_ids(records)

        triplets: List[Triplet] = []
        if cfg.loss_variant == "triplet":
            triplets = build_triplets(records, cfg.loss.threshold)
            if not triplets:
                raise ContractError("triplet training needs groups with both positive and negative pairs")
        n_units = len(triplets) if cfg.loss_variant == "triplet" else len(records)
        total_steps = cfg.epochs * steps_per_epoch(n_units, cfg.batch_size, self.min_last_batch)

        model = self._initial_model(seed, model)
        params: Dict[str, np.ndarray] = dict(model.parameters)
        trainable_tau = cfg.loss.temperature_trainable and cfg.loss_variant != "triplet"
        if trainable_tau:
            params["log_temperature"] = np.array(math.log(cfg.loss.temperature))
        state = AdamWState.zeros_like(params)

        out_dir = Path(run_dir) if run_dir is not None else None
        if out_dir is not None:
            (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)

        run = TrainRun(seed=seed, dev_metric=cfg.dev_metric, run_dir=str(out_dir) if out_dir else None)
        best_model: Optional[EncoderModel] = None
        step = 0
        slot = 0
        structured_logger.info(
            f"Training {cfg.loss_variant} for {cfg.epochs} epochs, {total_steps} steps, seed {seed}",
            operation="train_start", seed=seed, total_steps=total_steps,
        )

        epochs = range(1, cfg.epochs + 1)
        if cfg.show_progress:
            epochs = tqdm(epochs, desc=f"seed {seed}", unit="epoch")

        for epoch in epochs:
            batches = self._epoch_batches(records, triplets, model, seed, epoch)
            losses: List[float] = []
            skipped = 0
            log_tau = float(params["log_temperature"]) if trainable_tau else math.log(cfg.loss.temperature)

            for batch_units in batches:
                slot += 1
                try:
                    if cfg.loss_variant == "triplet":
                        output, grads = self._triplet_step(model, batch_units)
                    else:
                        output, grads = self._pair_step(model, batch_units, log_tau)
                except AllMaskedError:
                    skipped += 1
                    continue

                step += 1
                if not math.isfinite(output.value):
                    structured_logger.error(
                        f"Non-finite loss at step {step}", operation="train_step", step=step, epoch=epoch, seed=seed
                    )
                    raise DivergenceError("non-finite loss", step_index=step)

                if trainable_tau:
                    grads["log_temperature"] = np.array(output.grad_tau)

                params, state = adamw_step(params, grads, state, step, cfg, total_steps=total_steps, schedule_step=slot)
                model.parameters = {name: params[name] for name in model.parameters}
                if trainable_tau:
                    log_tau = project_log_temperature(params, state)
                losses.append(output.value)

            mean_loss = float(np.mean(losses)) if losses else float("nan")
            if skipped:
                structured_logger.warning(
                    f"Epoch {epoch}: skipped {skipped} batch(es) without a positive pair", epoch=epoch, seed=seed, skipped=skipped
                )
            temperature = temperature_from_log(log_tau)
            with structured_logger.time_operation("dev_evaluation"):
                dev_score = self.evaluator.score(model, dev_records, cfg.dev_metric, dev_records=dev_records)

            checkpoint_path = None
            if out_dir is not None:
                checkpoint_path = str(save_checkpoint(
                    model,
                    out_dir / "checkpoints" / f"epoch-{epoch}.npz",
                    meta={"epoch": epoch, "seed": seed, "step": step, "temperature": temperature, "dev_score": dev_score},
                    optimizer_state=state.as_arrays(),
                ))

            record = EpochRecord(
                epoch=epoch,
                mean_loss=mean_loss,
                dev_score=dev_score,
                steps=len(losses),
                skipped_batches=skipped,
                temperature=temperature,
                checkpoint_path=checkpoint_path,
            )
            run.epochs.append(record)
            if best_model is None or dev_score > max(run.dev_scores[:-1]):
                best_model = model.copy()

            structured_logger.info(
                f"Epoch {epoch}: loss {mean_loss:.4f}, dev {cfg.dev_metric} {dev_score:.4f}",
                operation="train_epoch", epoch=epoch, seed=seed, mean_loss=mean_loss, dev_score=dev_score,
                checkpoint=checkpoint_path,
            )
            if out_dir is not None:
                self._write_history(out_dir, run)

        run.selected_epoch = select_epoch(run.dev_scores)
        run.model = best_model
        if out_dir is not None:
            from ..cli.dataset_io import atomic_write_text

            atomic_write_text(out_dir / "report.json", json.dumps(run.to_dict(), indent=2, sort_keys=True) + "\n")
        return run

    def _write_history(self, out_dir: Path, run: TrainRun) -> None:
        from ..cli.dataset_io import atomic_write_text

        lines = [json.dumps(e.to_dict(), sort_keys=True) for e in run.epochs]
        atomic_write_text(out_dir / "metrics.jsonl", "\n".join(lines) + "\n")


def train(
    train_records: Sequence[PairRecord],
    dev_records: Sequence[PairRecord],
    model: Optional[EncoderModel],
    cfg: TrainConfig,
    seed: Optional[int] = None,
    run_dir: Optional[Union[str, Path]] = None,
) -> TrainRun:
    """Train one model with ``cfg``; see ``Trainer.train``."""
    return Trainer(cfg).train(train_records, dev_records, model=model, seed=seed, run_dir=run_dir)


def seed_search(
    cfg: TrainConfig,
    train_records: Sequence[PairRecord],
    dev_records: Sequence[PairRecord],
    run_dir: Optional[Union[str, Path]] = None,
) -> TrainRun:
    """
    Train once per distinct seed and keep the best run on dev.

    Failing seeds are logged and skipped; ties go to the lowest seed.

    Raises:
        SeedSearchError: if every seed fails
    """
    trainer = Trainer(cfg)
    seeds = sorted(set(cfg.seeds))
    runs: Dict[int, TrainRun] = {}
    failures: Dict[int, BaseException] = {}

    for seed in seeds:
        seed_dir = Path(run_dir) / f"seed-{seed}" if run_dir is not None else None
        with structured_logger.correlation_scope():
            try:
                runs[seed] = trainer.train(train_records, dev_records, seed=seed, run_dir=seed_dir)
            except (BSCError, ArithmeticError, ValueError) as e:
                failures[seed] = e
                structured_logger.error(f"Seed {seed} failed: {e}", operation="seed_search", seed=seed, **ErrorClassifier.describe(e))

    if not runs:
        raise SeedSearchError(failures)

    best_seed = min(runs, key=lambda s: (-runs[s].best_dev_score, s))
    best = runs[best_seed]
    best.seed_scores = {s: r.best_dev_score for s, r in runs.items()}
    logger.info(f"Seed search selected seed {best_seed} (dev {cfg.dev_metric} {best.best_dev_score:.4f})")
    return best
