#!/usr/bin/env python3
"""
Command-line interface.

    python -m src.cli.main [--log-level LEVEL] [--json-logs] COMMAND ...

Commands: train, evaluate, shuffle, gradcheck, knn, synth, ingest.
Results go to stdout and files; logs go to stderr. Exit status is 0 on
success, 1 for validation failures (bad input, config, file) and 2 for
runtime failures.
"""

import functools
import json
import sys
from pathlib import Path
from typing import Any, Callable, List, Optional, Tuple

import click
import numpy as np

from ..batching.knn_index import KNN_METRICS, FlatIndex
from ..batching.shuffler import Shuffler, iter_texts
from ..common.config_loader import RunConfig, load_run_config, write_resolved_config
from ..common.error_handler import ContractError, ErrorClassifier
from ..common.structured_logger import configure_logging, structured_logger
from ..evaluation.evaluator import Evaluator
from ..losses.gradient_check import run_gradient_suite
from ..training.encoder import EncoderModel, load_checkpoint
from ..training.trainer import seed_search
from .dataset_io import atomic_write_text, ingest as ingest_file, read_jsonl, split_records, write_jsonl
from .synthetic import generate_synthetic_benchmark

SHUFFLE_MODES = ("none", "random", "example_knn", "words", "clusters", "neighbors")


def handle_errors(func: Callable) -> Callable:
    """Run a command under a fresh correlation id and turn exceptions into exit codes."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        with structured_logger.correlation_scope():
            try:
                return func(*args, **kwargs)
            except (click.exceptions.Exit, click.ClickException):
                raise
            except Exception as e:
                description = ErrorClassifier.describe(e)
                structured_logger.error(f"{func.__name__} failed: {e}", operation=func.__name__, **description)
                click.echo(f"error: {e}", err=True)
                sys.exit(description["exit_code"])

    return wrapper


def _load_config(config_path: Optional[str], seed: Optional[int]) -> RunConfig:
    config = load_run_config(config_path)
    if seed is not None:
        config.train.seeds = [seed]
        config.train.shuffle.seed = seed
    return config


def _model_for(config: RunConfig, checkpoint: Optional[str]) -> EncoderModel:
    if checkpoint:
        return load_checkpoint(checkpoint, expected_config=config.train.encoder).model
    return EncoderModel.initialize(config.train.encoder, seed=config.train.seeds[0])


def _echo_json(data: Any) -> None:
    click.echo(json.dumps(data, indent=2, sort_keys=True))


@click.group()
@click.option("--log-level", default="INFO", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"]), show_default=True)
@click.option("--json-logs", is_flag=True, help="Emit log records as JSON lines.")
def cli(log_level: str, json_logs: bool) -> None:
    """Batch-softmax contrastive training toolkit."""
    configure_logging(level=log_level, json_output=json_logs)


@cli.command()
@click.option("--config", "config_path", type=click.Path(), help="Run configuration (YAML or JSON).")
@click.option("--data", "data_path", required=True, type=click.Path(), help="Dataset JSONL with train and dev splits.")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Run directory.")
@click.option("--seed", type=int, default=None, help="Train a single seed instead of the configured list.")
@handle_errors
def train(config_path: Optional[str], data_path: str, out_dir: str, seed: Optional[int]) -> None:
    """Train with seed search and write the run directory."""
    config = _load_config(config_path, seed)
    write_resolved_config(config, out_dir)
    splits = split_records(read_jsonl(data_path))
    run = seed_search(config.train, splits["train"], splits["dev"], run_dir=out_dir)
    structured_logger.debug("Training operation metrics", metrics=structured_logger.get_metrics()["operations"])
    summary = run.to_dict()
    atomic_write_text(Path(out_dir) / "selected.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _echo_json({
        "selected_seed": run.selected_seed,
        "selected_epoch": run.selected_epoch,
        "dev_metric": run.dev_metric,
        "best_dev_score": run.best_dev_score,
        "checkpoint": run.selected_checkpoint,
    })


@cli.command()
@click.option("--config", "config_path", type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--checkpoint", required=True, type=click.Path(), help="Checkpoint (.npz) to evaluate.")
@click.option("--split", default="test", type=click.Choice(["train", "dev", "test"]), show_default=True)
@click.option("--metric", "metrics", multiple=True, help="Metric name; repeatable (default: configured list).")
@click.option("--out", "out_path", type=click.Path(), help="Write the JSON report here.")
@click.option("--csv", "csv_path", type=click.Path(), help="Write the per-group CSV here.")
@handle_errors
def evaluate(
    config_path: Optional[str], data_path: str, checkpoint: str, split: str,
    metrics: Tuple[str, ...], out_path: Optional[str], csv_path: Optional[str],
) -> None:
    """Evaluate a checkpoint on one split."""
    config = _load_config(config_path, None)
    model = load_checkpoint(checkpoint, expected_config=config.train.encoder).model
    splits = split_records(read_jsonl(data_path))
    evaluator = Evaluator(config.train.evaluation.model_dump())
    report = evaluator.evaluate(model, splits[split], dev_records=splits["dev"], metrics=list(metrics) or None)
    report.metadata["checkpoint"] = str(checkpoint)
    report.metadata["split"] = split
    if out_path:
        report.save(out_path, format="json")
        write_resolved_config(config, Path(out_path).parent)
    if csv_path:
        report.to_csv(csv_path)
    click.echo(report.to_table())


@cli.command()
@click.option("--config", "config_path", type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path(), help="Reordered JSONL; a .groups.json sidecar is written beside it.")
@click.option("--mode", type=click.Choice(SHUFFLE_MODES), default=None, help="Overrides the configured mode.")
@click.option("--seed", type=int, default=None)
@click.option("--checkpoint", type=click.Path(), default=None, help="Encoder for embedding-based modes.")
@handle_errors
def shuffle(
    config_path: Optional[str], data_path: str, out_path: str, mode: Optional[str],
    seed: Optional[int], checkpoint: Optional[str],
) -> None:
    """Reorder a dataset with a shuffle mode."""
    config = _load_config(config_path, seed)
    if mode is not None:
        config.train.shuffle.mode = mode
    records = read_jsonl(data_path)
    shuffler = Shuffler.from_config(config.train.shuffle)

    embeddings = None
    if shuffler.requires_embeddings:
        model = _model_for(config, checkpoint)
        embeddings = model.encode_batch(iter_texts(records, config.train.shuffle.element))
    sequence = shuffler.shuffle(records, embeddings)

    by_id = {r.record_id: r for r in records}
    target = write_jsonl([by_id[rid] for rid in sequence.record_ids], out_path)
    sidecar = target.with_name(target.stem + ".groups.json")
    atomic_write_text(sidecar, json.dumps(sequence.to_sidecar(), indent=2) + "\n")
    write_resolved_config(config, target.parent)
    click.echo(f"wrote {len(sequence)} records in {len(sequence.boundaries)} groups to {target}")


@cli.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--verbose", is_flag=True, help="Print every check, not only failures.")
@handle_errors
def gradcheck(seed: int, verbose: bool) -> None:
    """Run the finite-difference gradient suite; exit 0 iff every check passes."""
    with structured_logger.time_operation("gradcheck"):
        results, passed = run_gradient_suite({"seed": seed})
    for result in results:
        if verbose or not result.passed:
            status = "ok" if result.passed else "FAIL"
            click.echo(f"{status:4s} {result.name}: {result.relative_error:.3e} (tol {result.tolerance:.0e})")
    click.echo(f"{sum(r.passed for r in results)}/{len(results)} gradient checks passed")
    if not passed:
        sys.exit(2)


@cli.command()
@click.option("--config", "config_path", type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--query", "queries", multiple=True, required=True, help="Query text; repeatable.")
@click.option("--k", "top_k", type=int, default=5, show_default=True)
@click.option("--metric", type=click.Choice(KNN_METRICS), default="cosine", show_default=True)
@click.option("--element", type=click.Choice(["first", "second"]), default="second", show_default=True)
@click.option("--checkpoint", type=click.Path(), default=None)
@handle_errors
def knn(
    config_path: Optional[str], data_path: str, queries: Tuple[str, ...], top_k: int,
    metric: str, element: str, checkpoint: Optional[str],
) -> None:
    """Debug nearest-neighbor queries over a dataset's texts."""
    config = _load_config(config_path, None)
    model = _model_for(config, checkpoint)
    records = read_jsonl(data_path)
    if not records:
        raise ContractError(f"dataset {data_path} is empty")
    vectors = model.encode_batch(iter_texts(records, element))
    index = FlatIndex.build(vectors, ids=np.arange(len(records)), metric=metric)
    query_vectors = model.encode_batch(list(queries))

    results: List[Any] = []
    for text, vector, ids in zip(queries, query_vectors, index.search_many(query_vectors, top_k)):
        scores = index.scores(vector)
        results.append({
            "query": text,
            "neighbors": [
                {"id": records[i].record_id, "text": records[i].text(element), "score": float(scores[i])}
                for i in ids
            ],
        })
    _echo_json(results)


@cli.command()
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--topics", type=int, default=8, show_default=True)
@click.option("--pairs-per-topic", type=int, default=40, show_default=True)
@click.option("--negative-fraction", type=float, default=0.2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@handle_errors
def synth(out_path: str, topics: int, pairs_per_topic: int, negative_fraction: float, seed: int) -> None:
    """Generate the synthetic topic/entity benchmark."""
    records = generate_synthetic_benchmark(topics, pairs_per_topic, negative_fraction, seed)
    target = write_jsonl(records, out_path)
    click.echo(f"wrote {len(records)} records to {target}")


@cli.command()
@click.argument("raw_path", type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--scale-min", type=float, required=True, help="Lowest raw score (e.g. 1 for a 1-4 scale).")
@click.option("--scale-max", type=float, required=True, help="Highest raw score.")
@handle_errors
def ingest(raw_path: str, out_path: str, scale_min: float, scale_max: float) -> None:
    """Normalize a raw TSV/JSONL file into the dataset format."""
    records = ingest_file(raw_path, (scale_min, scale_max))
    target = write_jsonl(records, out_path)
    click.echo(f"wrote {len(records)} records to {target}")


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
