"""
Log-spaced negative sampling over a candidate database.

For every positive pair the database is ranked by similarity to the anchor.
Negatives are taken at ranks offset + 2, offset + 4, offset + 8, ... while
the rank stays within the database, skipping the near neighbors that are
likely unlabeled positives. Positives are then oversampled so both classes
end up of similar size.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from loguru import logger

from ..batching.knn_index import FlatIndex
from ..batching.records import PairRecord, Triplet, build_triplets
from ..common.config_loader import PfccConfig
from ..common.error_handler import ContractError


def negative_ranks(database_size: int, offset: int = 100) -> List[int]:
    """1-based ranks offset + 2^k, k >= 1, that fit in the database."""
    ranks = []
    k = 1
    while offset + 2 ** k <= database_size:
        ranks.append(offset + 2 ** k)
        k += 1
    return ranks


@dataclass
class PfccSample:
    """Augmented dataset produced by the sampler."""

    records: List[PairRecord] = field(default_factory=list)
    triplets: List[Triplet] = field(default_factory=list)
    negative_ranks: List[int] = field(default_factory=list)
    oversample_factor: int = 1

    @property
    def n_positive(self) -> int:
        return sum(1 for r in self.records if r.label > 0.0)

    @property
    def n_negative(self) -> int:
        return sum(1 for r in self.records if r.label == 0.0)


class PfccNegativeSampler:
    """
    Adds log-spaced negatives to a set of positive pairs.
    """

    def __init__(self, config: Optional[Dict[str, Any]] = None, **kwargs):
        """
        Initialize the PfccNegativeSampler.

        Args:
            config: Optional configuration dictionary (PfccConfig keys)
            **kwargs: Additional configuration parameters
        """
        self.logger = logger
        self.default_config = PfccConfig().model_dump()

        merged = dict(self.default_config)
        merged.update(config or {})
        merged.update(kwargs)
        self.config = PfccConfig(**merged)

    def oversample_factor(self, n_positive: int, n_negative: int) -> int:
        """Configured factor, or ceil(n_neg / (balance_ratio * n_pos)) with a floor of 1."""
        if self.config.oversample_factor is not None:
            return self.config.oversample_factor
        if n_positive == 0:
            return 1
        return max(1, math.ceil(n_negative / (self.config.balance_ratio * n_positive)))

    def sample(self, positive_pairs: Sequence[PairRecord], database: Sequence[str], encoder: Any) -> PfccSample:
        """
        Build the augmented dataset.

        Args:
            positive_pairs: Anchor pairs (text_q is the anchor)
            database: Candidate texts ranked for every anchor
            encoder: Model with ``encode_batch(texts)``

        Returns:
            PfccSample

        Raises:
            ContractError: if the database is not larger than the offset
        """
        offset = self.config.offset
        if len(database) <= offset:
            raise ContractError(
                f"database has {len(database)} entries but the rank offset is {offset}; "
                f"lower pfcc.offset below the database size"
            )
        ranks = negative_ranks(len(database), offset)
        if not positive_pairs:
            return PfccSample(negative_ranks=ranks)

        index = FlatIndex.build(encoder.encode_batch(list(database)), ids=range(len(database)), metric="cosine")
        anchors = encoder.encode_batch([p.text_q for p in positive_pairs])
        rankings = index.search_many(anchors, top_n=ranks[-1]) if ranks else [[] for _ in positive_pairs]

        negatives: List[PairRecord] = []
        for pair, ranking in zip(positive_pairs, rankings):
            for rank in ranks:
                negatives.append(PairRecord(
                    record_id=f"{pair.record_id}#neg{rank}",
                    text_q=pair.text_q,
                    text_a=database[ranking[rank - 1]],
                    label=0.0,
                    group_key=pair.group_key if pair.group_key is not None else pair.record_id,
                    split=pair.split,
                ))

        factor = self.oversample_factor(len(positive_pairs), len(negatives))
        records: List[PairRecord] = []
        for pair in positive_pairs:
            group = pair.group_key if pair.group_key is not None else pair.record_id
            for copy in range(factor):
                record_id = pair.record_id if copy == 0 else f"{pair.record_id}#dup{copy}"
                records.append(PairRecord(
                    record_id=record_id,
                    text_q=pair.text_q,
                    text_a=pair.text_a,
                    label=pair.label,
                    group_key=group,
                    split=pair.split,
                ))
        records.extend(negatives)

        triplets: List[Triplet] = []
        if self.config.emit_triplets:
            triplets = build_triplets([r for r in records if "#dup" not in r.record_id])

        self.logger.info(
            f"Sampled {len(negatives)} negatives at ranks {ranks} for {len(positive_pairs)} anchors "
            f"(positives oversampled x{factor})"
        )
        return PfccSample(records=records, triplets=triplets, negative_ranks=ranks, oversample_factor=factor)


def sample_pfcc_negatives(
    positive_pairs: Sequence[PairRecord],
    database: Sequence[str],
    encoder: Any,
    cfg: Optional[PfccConfig] = None,
) -> PfccSample:
    """Functional form of ``PfccNegativeSampler.sample``."""
    config = cfg.model_dump() if cfg is not None else None
    return PfccNegativeSampler(config).sample(positive_pairs, database, encoder)
