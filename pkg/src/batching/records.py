"""
Dataset records and the ordered, grouped output of a shuffle.
"""

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from ..common.error_handler import ContractError

SPLITS = ("train", "dev", "test")


@dataclass
class PairRecord:
    """One labeled (q, a) pair of a dataset."""

    record_id: str
    text_q: str
    text_a: str
    label: float = 1.0
    group_key: Optional[str] = None
    split: str = "train"
    embedding_q: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    embedding_a: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def text(self, element: str) -> str:
        """Text of the grouping element ("first" is q, "second" is a)."""
        return self.text_q if element == "first" else self.text_a

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "id": self.record_id,
            "text_q": self.text_q,
            "text_a": self.text_a,
            "label": self.label,
        }
        if self.group_key is not None:
            data["group"] = self.group_key
        data["split"] = self.split
        return data


def check_unique_ids(records: Sequence[PairRecord]) -> None:
    """Raise ContractError if two records share an id."""
    seen = set()
    for record in records:
        if record.record_id in seen:
            raise ContractError(f"duplicate record id '{record.record_id}'")
        seen.add(record.record_id)


@dataclass
class ShuffledSequence:
    """
    Record ids in emission order, with the group each position belongs to.

    Consecutive positions sharing a group id form one group.
    """

    record_ids: List[str]
    group_ids: List[int]

    def __post_init__(self) -> None:
        if len(self.record_ids) != len(self.group_ids):
            raise ContractError(
                f"{len(self.record_ids)} record ids but {len(self.group_ids)} group ids in shuffled sequence"
            )

    @classmethod
    def from_groups(cls, groups: Iterable[Sequence[str]]) -> "ShuffledSequence":
        """Concatenate groups in order, numbering them 0, 1, 2, ..."""
        record_ids: List[str] = []
        group_ids: List[int] = []
        for number, group in enumerate(groups):
            record_ids.extend(group)
            group_ids.extend([number] * len(group))
        return cls(record_ids=record_ids, group_ids=group_ids)

    def __len__(self) -> int:
        return len(self.record_ids)

    @property
    def boundaries(self) -> List[int]:
        """Start offset of every group."""
        return [i for i in range(len(self.group_ids)) if i == 0 or self.group_ids[i] != self.group_ids[i - 1]]

    @property
    def groups(self) -> List[List[str]]:
        starts = self.boundaries + [len(self.record_ids)]
        return [self.record_ids[starts[i]:starts[i + 1]] for i in range(len(starts) - 1)]

    def is_permutation_of(self, record_ids: Iterable[str]) -> bool:
        return sorted(self.record_ids) == sorted(record_ids)

    def to_sidecar(self) -> Dict[str, Any]:
        """Group layout for the shuffle sidecar file."""
        return {
            "boundaries": self.boundaries,
            "group_ids": [str(g) for g in self.group_ids],
            "groups": self.groups,
        }


@dataclass
class Triplet:
    """Anchor text with one positive and one negative answer."""

    anchor_id: str
    anchor: str
    positive: str
    negative: str


def build_triplets(records: Sequence[PairRecord], threshold: float = 0.5) -> List[Triplet]:
    """
    Combine pairs into triplets by common anchor.

    Records are grouped by group key, falling back to the query text; every
    positive (label > threshold) is paired with every negative of its group.

    Args:
        records: Labeled pairs
        threshold: Binarization threshold

    Returns:
        Triplets in dataset order of their positive pair
    """
    by_anchor: "OrderedDict[str, List[PairRecord]]" = OrderedDict()
    for record in records:
        key = record.group_key if record.group_key is not None else record.text_q
        by_anchor.setdefault(key, []).append(record)

    triplets: List[Triplet] = []
    for members in by_anchor.values():
        positives = [r for r in members if r.label > threshold]
        negatives = [r for r in members if r.label <= threshold]
        for pos in positives:
            for neg in negatives:
                triplets.append(Triplet(anchor_id=pos.record_id, anchor=pos.text_q, positive=pos.text_a, negative=neg.text_a))
    return triplets
