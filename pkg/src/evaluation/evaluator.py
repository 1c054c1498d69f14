"""
Evaluation of an encoder on a dataset split.

Queries and candidates are encoded independently and scored by cosine
similarity. Ranked groups are formed in one of two modes:

    group  candidates are the records sharing a group key (answer re-ranking)
    pool   every query ranks every distinct answer of the split (claim retrieval)

Pair-level metrics (spearman, f1) score each record's own (q, a) pair.
"""

import json
import re
from collections import OrderedDict
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from ..batching.records import PairRecord
from ..common.error_handler import ContractError, DomainError
from .metrics import (
    DEFAULT_RELEVANCE_THRESHOLD,
    Candidate,
    RankedGroup,
    average_precision,
    f1_with_threshold,
    has_positives_at_k,
    mean_average_precision,
    mrr,
    ndcg_at_k,
    p_at_1,
    reciprocal_rank,
    spearman,
)

GROUPING_MODES = ("group", "pool")
PAIR_METRICS = ("spearman", "f1")

_AT_K = re.compile(r"^(ndcg|hp)@(\d+)$")


def _unit_rows(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    return M / np.maximum(norms, 1e-12)


def query_key(record: PairRecord) -> str:
    return record.group_key if record.group_key is not None else record.text_q


def build_ranked_groups(
    records: Sequence[PairRecord], model: Any, mode: str = "group"
) -> List[RankedGroup]:
    """
    Score candidates for every query of a split.

    Args:
        records: Records of one split
        model: Encoder with an ``encode_batch(texts)`` method
        mode: "group" or "pool"

    Returns:
        RankedGroups with graded relevance taken from the record labels
    """
    if mode not in GROUPING_MODES:
        raise ContractError(f"Unknown grouping mode '{mode}'; expected one of {GROUPING_MODES}")
    if not records:
        return []

    by_query: "OrderedDict[str, List[PairRecord]]" = OrderedDict()
    for record in records:
        by_query.setdefault(query_key(record), []).append(record)

    query_texts = [members[0].text_q for members in by_query.values()]
    Qn = _unit_rows(model.encode_batch(query_texts))

    if mode == "group":
        groups = []
        for qi, (key, members) in enumerate(by_query.items()):
            An = _unit_rows(model.encode_batch([r.text_a for r in members]))
            scores = An @ Qn[qi]
            groups.append(RankedGroup(
                query_id=key,
                candidates=[Candidate(r.record_id, float(s), float(r.label)) for r, s in zip(members, scores)],
            ))
        return groups

    # pool: one candidate per distinct answer text
    answer_ids: "OrderedDict[str, str]" = OrderedDict()
    for record in records:
        answer_ids.setdefault(record.text_a, record.record_id)
    answer_texts = list(answer_ids)
    An = _unit_rows(model.encode_batch(answer_texts))
    scores = Qn @ An.T

    groups = []
    for qi, (key, members) in enumerate(by_query.items()):
        relevance: Dict[str, float] = {}
        for r in members:
            relevance[r.text_a] = max(relevance.get(r.text_a, 0.0), float(r.label))
        candidates = [
            Candidate(answer_ids[text], float(scores[qi, ai]), relevance.get(text, 0.0))
            for ai, text in enumerate(answer_texts)
        ]
        groups.append(RankedGroup(query_id=key, candidates=candidates))
    return groups


def pair_scores(records: Sequence[PairRecord], model: Any) -> np.ndarray:
    """Cosine similarity of every record's own (q, a) pair."""
    if not records:
        return np.zeros(0)
    Qn = _unit_rows(model.encode_batch([r.text_q for r in records]))
    An = _unit_rows(model.encode_batch([r.text_a for r in records]))
    return np.sum(Qn * An, axis=1)


@dataclass
class EvalReport:
    """Metric values with a per-group breakdown."""

    metrics: Dict[str, float] = field(default_factory=dict)
    per_group: List[Dict[str, Any]] = field(default_factory=list)
    skipped_groups: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "metrics": self.metrics,
            "skipped_groups": self.skipped_groups,
            "n_groups": len(self.per_group),
            "per_group": self.per_group,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False, sort_keys=True)

    def to_table(self) -> str:
        """Human-readable metric table."""
        width = max([len(name) for name in self.metrics] + [6])
        lines = [f"{'metric':<{width}}  value", f"{'-' * width}  ------"]
        for name, value in self.metrics.items():
            lines.append(f"{name:<{width}}  {value:.4f}")
        lines.append(f"{'groups':<{width}}  {len(self.per_group)} ({self.skipped_groups} without a relevant candidate)")
        return "\n".join(lines)

    def to_csv(self, output_path: Union[str, Path]) -> Path:
        """Per-group breakdown as CSV."""
        target = Path(output_path)
        target.parent.mkdir(parents=True, exist_ok=True)
        columns = ["query_id", "n_candidates", "n_relevant", "reciprocal_rank", "average_precision", "top_candidate"]
        pd.DataFrame(self.per_group, columns=columns).to_csv(target, index=False)
        return target

    def save(self, output_path: Union[str, Path], format: str = "json") -> Path:
        """
        Save the report.

        Args:
            output_path: Target file
            format: 'json', 'table' or 'csv'
        """
        from ..cli.dataset_io import atomic_write_text

        target = Path(output_path)
        if format == "json":
            atomic_write_text(target, self.to_json() + "\n")
        elif format == "table":
            atomic_write_text(target, self.to_table() + "\n")
        elif format == "csv":
            self.to_csv(target)
        else:
            raise ContractError(f"Unsupported report format: {format}")
        logger.info(f"Report saved to {target}")
        return target


def _group_breakdown(group: RankedGroup, threshold: float) -> Dict[str, Any]:
    ranked = group.ranked()
    binary = np.array([c.relevance > threshold for c in ranked])
    return {
        "query_id": group.query_id,
        "n_candidates": len(ranked),
        "n_relevant": int(binary.sum()),
        "reciprocal_rank": reciprocal_rank(binary),
        "average_precision": average_precision(binary),
        "top_candidate": ranked[0].candidate_id,
    }


def compute_group_metric(name: str, groups: Sequence[RankedGroup], threshold: float) -> float:
    """Evaluate one ranking metric by name (mrr, map, p@1, ndcg@K, hp@K)."""
    if name == "mrr":
        return mrr(groups, threshold)
    if name == "map":
        return mean_average_precision(groups, threshold)
    if name == "p@1":
        return p_at_1(groups, threshold)
    match = _AT_K.match(name)
    if match:
        k = int(match.group(2))
        if match.group(1) == "ndcg":
            return ndcg_at_k(groups, k)
        return has_positives_at_k(groups, k, threshold)
    raise ContractError(f"Unknown metric '{name}'")


def evaluate_groups(
    groups: Sequence[RankedGroup],
    metrics: Sequence[str],
    threshold: float = DEFAULT_RELEVANCE_THRESHOLD,
) -> EvalReport:
    """
    Compute ranking metrics over ranked groups.

    Args:
        groups: Ranked groups
        metrics: Metric names
        threshold: Relevance threshold

    Returns:
        EvalReport
    """
    if not groups:
        raise DomainError("cannot evaluate an empty set of groups")
    values = {name: compute_group_metric(name, groups, threshold) for name in metrics}
    return EvalReport(
        metrics=values,
        per_group=[_group_breakdown(g, threshold) for g in groups],
        skipped_groups=sum(1 for g in groups if not g.has_relevant(threshold)),
        metadata={"generated_at": datetime.now().isoformat(), "threshold": threshold},
    )


class Evaluator:
    """
    Encodes a split with a model and computes the configured metrics.
    """

    def __init__(self, config: Optional[Dict[str, Any]] = None, **kwargs):
        """
        Initialize the Evaluator.

        Args:
            config: Optional configuration dictionary
            **kwargs: Additional configuration parameters
        """
        self.config = dict(config or {})
        self.logger = logger

        self.default_config = {
            "metrics": ["mrr", "map", "p@1", "ndcg@1"],
            "grouping": "group",
            "relevance_threshold": DEFAULT_RELEVANCE_THRESHOLD,
        }

        for key, value in self.default_config.items():
            if key not in self.config:
                self.config[key] = value

        for key, value in kwargs.items():
            self.config[key] = value

        if self.config["grouping"] not in GROUPING_MODES:
            raise ContractError(f"Unknown grouping mode '{self.config['grouping']}'")

    def _pair_metrics(
        self,
        names: Sequence[str],
        model: Any,
        records: Sequence[PairRecord],
        dev_records: Optional[Sequence[PairRecord]],
    ) -> Tuple[Dict[str, float], Dict[str, Any]]:
        values: Dict[str, float] = {}
        extra: Dict[str, Any] = {}
        threshold = self.config["relevance_threshold"]
        scores = pair_scores(records, model)
        labels = np.array([r.label for r in records])
        for name in names:
            if name == "spearman":
                values[name] = spearman(scores, labels)
            elif name == "f1":
                if not dev_records:
                    raise ContractError("the f1 metric selects its threshold on a dev split; none was given")
                dev_scores = pair_scores(dev_records, model)
                dev_labels = np.array([r.label for r in dev_records]) > threshold
                chosen, value = f1_with_threshold(scores, labels > threshold, dev_scores, dev_labels)
                values[name] = value
                extra["f1_threshold"] = chosen
        return values, extra

    def evaluate(
        self,
        model: Any,
        records: Sequence[PairRecord],
        dev_records: Optional[Sequence[PairRecord]] = None,
        metrics: Optional[Sequence[str]] = None,
    ) -> EvalReport:
        """
        Evaluate a model on a split.

        Args:
            model: Encoder with ``encode_batch``
            records: Records of the evaluated split
            dev_records: Dev split, needed for the f1 threshold
            metrics: Metric names; defaults to the configured list

        Returns:
            EvalReport
        """
        names = list(metrics or self.config["metrics"])
        threshold = self.config["relevance_threshold"]
        ranking_names = [n for n in names if n not in PAIR_METRICS]
        pair_names = [n for n in names if n in PAIR_METRICS]

        if ranking_names:
            groups = build_ranked_groups(records, model, self.config["grouping"])
            report = evaluate_groups(groups, ranking_names, threshold)
        else:
            report = EvalReport(metadata={"generated_at": datetime.now().isoformat(), "threshold": threshold})

        if pair_names:
            values, extra = self._pair_metrics(pair_names, model, records, dev_records)
            report.metrics.update(values)
            report.metadata.update(extra)

        report.metrics = {name: report.metrics[name] for name in names}
        report.metadata["grouping"] = self.config["grouping"]
        report.metadata["n_records"] = len(records)
        self.logger.info("Evaluation: " + ", ".join(f"{k}={v:.4f}" for k, v in report.metrics.items()))
        return report

    def score(
        self,
        model: Any,
        records: Sequence[PairRecord],
        metric: str,
        dev_records: Optional[Sequence[PairRecord]] = None,
    ) -> float:
        """Single metric value, used for dev selection."""
        return self.evaluate(model, records, dev_records=dev_records, metrics=[metric]).metrics[metric]
