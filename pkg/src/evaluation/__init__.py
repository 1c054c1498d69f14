"""
Ranking and pair-scoring metrics, and the evaluator that applies them.
"""

from .metrics import (
    Candidate, RankedGroup, mrr, mean_average_precision, p_at_1, has_positives_at_k,
    ndcg_at_k, spearman, f1_with_threshold
)
from .evaluator import EvalReport, Evaluator, build_ranked_groups

__all__ = [
    'Candidate',
    'RankedGroup',
    'mrr',
    'mean_average_precision',
    'p_at_1',
    'has_positives_at_k',
    'ndcg_at_k',
    'spearman',
    'f1_with_threshold',
    'EvalReport',
    'Evaluator',
    'build_ranked_groups'
]
