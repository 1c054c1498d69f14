"""
Ranking, correlation and classification metrics.

Ranking metrics work on RankedGroups: candidates are ordered by descending
model score, ties broken by ascending candidate id. A candidate is relevant
when its relevance label exceeds the threshold (0.5 by default). Groups with
no relevant candidate are skipped; a call where every group is skipped is a
domain error.
"""

import math
from dataclasses import dataclass, field
from typing import Any, List, Sequence, Tuple

import numpy as np
from scipy.stats import pearsonr, rankdata
from sklearn.metrics import f1_score

from ..common.error_handler import ContractError, DegenerateInputError, DomainError, ShapeError

DEFAULT_RELEVANCE_THRESHOLD = 0.5


@dataclass(frozen=True)
class Candidate:
    """One scored candidate of a ranked group."""

    candidate_id: str
    score: float
    relevance: float


@dataclass
class RankedGroup:
    """A query with its scored candidates."""

    query_id: str
    candidates: List[Candidate] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ContractError(f"group '{self.query_id}' has no candidates")
        if not all(math.isfinite(c.score) for c in self.candidates):
            raise DegenerateInputError(f"group '{self.query_id}' has a non-finite score")

    def ranked(self) -> List[Candidate]:
        """Candidates by descending score, then ascending id."""
        return sorted(self.candidates, key=lambda c: (-c.score, c.candidate_id))

    def relevance_in_rank_order(self) -> np.ndarray:
        return np.array([c.relevance for c in self.ranked()], dtype=np.float64)

    def has_relevant(self, threshold: float = DEFAULT_RELEVANCE_THRESHOLD) -> bool:
        return any(c.relevance > threshold for c in self.candidates)


def _binary_ranks(groups: Sequence[RankedGroup], threshold: float) -> List[np.ndarray]:
    """Binary relevance vectors in rank order for the groups that have a relevant candidate."""
    if not groups:
        raise DomainError("metric over an empty set of groups is undefined")
    rs = [g.relevance_in_rank_order() > threshold for g in groups if g.has_relevant(threshold)]
    if not rs:
        raise DomainError("no group has a relevant candidate")
    return rs


def _check_k(k: int) -> None:
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")


def reciprocal_rank(r: np.ndarray) -> float:
    """1 / rank of the first relevant item of a binary relevance vector."""
    hits = np.flatnonzero(r)
    return 1.0 / (hits[0] + 1) if hits.size else 0.0


def average_precision(r: np.ndarray) -> float:
    """Mean of precision@rank over the ranks of relevant items."""
    hits = np.flatnonzero(r)
    if not hits.size:
        return 0.0
    return float(np.mean([(i + 1) / (rank + 1) for i, rank in enumerate(hits)]))


def dcg_at_k(relevance: np.ndarray, k: int) -> float:
    """Sum of (2^rel - 1) / log2(rank + 1) over the first k ranks."""
    rel = np.asarray(relevance, dtype=np.float64)[:k]
    if rel.size == 0:
        return 0.0
    discounts = np.log2(np.arange(2, rel.size + 2))
    return float(np.sum((np.power(2.0, rel) - 1.0) / discounts))


def mrr(groups: Sequence[RankedGroup], threshold: float = DEFAULT_RELEVANCE_THRESHOLD) -> float:
    """Mean reciprocal rank of the first relevant candidate."""
    return float(np.mean([reciprocal_rank(r) for r in _binary_ranks(groups, threshold)]))


def mean_average_precision(groups: Sequence[RankedGroup], threshold: float = DEFAULT_RELEVANCE_THRESHOLD) -> float:
    """Standard MAP: average precision per group, averaged over groups."""
    return float(np.mean([average_precision(r) for r in _binary_ranks(groups, threshold)]))


def p_at_1(groups: Sequence[RankedGroup], threshold: float = DEFAULT_RELEVANCE_THRESHOLD) -> float:
    """Fraction of groups whose top candidate is relevant."""
    return float(np.mean([1.0 if r[0] else 0.0 for r in _binary_ranks(groups, threshold)]))


def has_positives_at_k(groups: Sequence[RankedGroup], k: int, threshold: float = DEFAULT_RELEVANCE_THRESHOLD) -> float:
    """Fraction of groups with at least one relevant candidate among the top k."""
    _check_k(k)
    return float(np.mean([1.0 if np.any(r[:k]) else 0.0 for r in _binary_ranks(groups, threshold)]))


def ndcg_at_k(groups: Sequence[RankedGroup], k: int) -> float:
    """
    Mean nDCG@k with graded gain 2^rel - 1.

    Each group is normalized by the DCG of its ideal ordering; groups whose
    ideal DCG is zero are skipped.
    """
    _check_k(k)
    if not groups:
        raise DomainError("metric over an empty set of groups is undefined")
    values = []
    for group in groups:
        relevance = group.relevance_in_rank_order()
        ideal = dcg_at_k(np.sort(relevance)[::-1], k)
        if ideal <= 0.0:
            continue
        values.append(dcg_at_k(relevance, k) / ideal)
    if not values:
        raise DomainError("every group has zero ideal DCG")
    return float(np.mean(values))


def spearman(pred_scores: Any, gold_scores: Any) -> float:
    """Pearson correlation of fractional (average-tie) ranks."""
    pred = np.asarray(pred_scores, dtype=np.float64).ravel()
    gold = np.asarray(gold_scores, dtype=np.float64).ravel()
    if pred.shape != gold.shape:
        raise ShapeError(f"{pred.shape[0]} predictions for {gold.shape[0]} gold scores")
    if pred.size < 2:
        raise DomainError("Spearman correlation needs at least two points")
    if np.ptp(pred) == 0.0 or np.ptp(gold) == 0.0:
        raise DomainError("Spearman correlation is undefined for constant input")
    statistic, _ = pearsonr(rankdata(pred), rankdata(gold))
    return float(statistic)


def threshold_candidates(dev_scores: Any) -> np.ndarray:
    """Below-minimum threshold plus every midpoint between consecutive distinct dev scores."""
    unique = np.unique(np.asarray(dev_scores, dtype=np.float64))
    midpoints = (unique[:-1] + unique[1:]) / 2.0
    return np.concatenate([[unique[0] - 1.0], midpoints])


def f1_with_threshold(
    pred_scores: Any,
    gold_labels: Any,
    dev_scores: Any,
    dev_labels: Any,
) -> Tuple[float, float]:
    """
    Pick the F1-maximizing threshold on dev, then report F1 on the eval split.

    A score at or above the threshold predicts the positive class. Among
    equally good thresholds the lowest wins.

    Args:
        pred_scores: Eval-split scores
        gold_labels: Eval-split binary labels
        dev_scores: Dev-split scores
        dev_labels: Dev-split binary labels (both classes required)

    Returns:
        Tuple of (threshold, eval F1)
    """
    dev_s = np.asarray(dev_scores, dtype=np.float64).ravel()
    dev_y = np.asarray(dev_labels).ravel().astype(bool)
    if dev_s.size == 0 or dev_s.shape != dev_y.shape:
        raise ContractError(f"dev split needs matching non-empty scores and labels, got {dev_s.size} and {dev_y.size}")
    if dev_y.all() or not dev_y.any():
        raise ContractError("dev split must contain both classes to select a threshold")

    best_threshold, best_f1 = None, -1.0
    for threshold in threshold_candidates(dev_s):
        value = f1_score(dev_y, dev_s >= threshold, zero_division=0)
        if value > best_f1:
            best_threshold, best_f1 = float(threshold), value

    eval_s = np.asarray(pred_scores, dtype=np.float64).ravel()
    eval_y = np.asarray(gold_labels).ravel().astype(bool)
    if eval_s.shape != eval_y.shape:
        raise ShapeError(f"{eval_s.size} eval scores for {eval_y.size} labels")
    return best_threshold, float(f1_score(eval_y, eval_s >= best_threshold, zero_division=0))
