"""
Exact flat nearest-neighbor index.

Results are ordered by decreasing similarity (increasing distance for the
euclidean metric) with ties broken by ascending id.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Any, Collection, List, Sequence

import numpy as np

from ..common.error_handler import ContractError, DegenerateInputError, ShapeError
from ..losses.dense_core import as_embedding_matrix
from ..losses.normalization import normalize

KNN_METRICS = ("dot", "cosine", "euclidean")


class FlatIndex:
    """Immutable brute-force index over a set of row vectors."""

    def __init__(self, vectors: np.ndarray, ids: np.ndarray, metric: str):
        self.vectors = vectors
        self.ids = ids
        self.metric = metric
        self.vectors.setflags(write=False)
        self.ids.setflags(write=False)

    @classmethod
    def build(cls, vectors: Any, ids: Sequence[int], metric: str = "cosine") -> "FlatIndex":
        """
        Build an index.

        Args:
            vectors: (N, n) matrix with N >= 1
            ids: N unique integer ids
            metric: One of KNN_METRICS; cosine pre-normalizes the rows

        Returns:
            FlatIndex
        """
        if metric not in KNN_METRICS:
            raise ContractError(f"Unknown metric '{metric}'; expected one of {KNN_METRICS}")
        if np.asarray(vectors).size == 0:
            raise ContractError("cannot build an index over zero vectors")

        matrix = as_embedding_matrix(vectors, "index vectors")
        id_array = np.asarray(ids, dtype=np.int64).ravel()
        if id_array.shape[0] != matrix.shape[0]:
            raise ContractError(f"{id_array.shape[0]} ids for {matrix.shape[0]} vectors")
        if np.unique(id_array).shape[0] != id_array.shape[0]:
            raise ContractError("index ids must be unique")

        if metric == "cosine":
            matrix = normalize(matrix, "row_l2")
        return cls(matrix.copy(), id_array.copy(), metric)

    @property
    def size(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def _prepare_query(self, query: Any) -> np.ndarray:
        q = np.asarray(query, dtype=np.float64).ravel()
        if q.shape[0] != self.dim:
            raise ShapeError(f"query has dimension {q.shape[0]}, index has dimension {self.dim}")
        if not np.all(np.isfinite(q)):
            raise DegenerateInputError("query contains non-finite entries")
        if self.metric == "cosine":
            norm = np.linalg.norm(q)
            if norm == 0.0:
                raise DegenerateInputError("cosine query is the zero vector")
            q = q / norm
        return q

    def scores(self, query: Any) -> np.ndarray:
        """Score of every indexed row; higher is closer (negated squared distance for euclidean)."""
        q = self._prepare_query(query)
        if self.metric == "euclidean":
            return -np.sum((self.vectors - q) ** 2, axis=1)
        return self.vectors @ q

    def search(self, query: Any, top_n: int) -> List[int]:
        """
        Ids of the top_n closest rows.

        Returns min(top_n, size) ids.
        """
        if top_n < 1:
            raise ContractError(f"top_n must be >= 1, got {top_n}")
        scores = self.scores(query)
        n = min(top_n, self.size)

        if n < self.size:
            # Keep every row scoring at least the n-th best so ties at the cut are resolved by id.
            kth = np.partition(-scores, n - 1)[n - 1]
            candidates = np.flatnonzero(-scores <= kth)
        else:
            candidates = np.arange(self.size)

        order = np.lexsort((self.ids[candidates], -scores[candidates]))
        return [int(i) for i in self.ids[candidates[order]][:n]]

    def filtered_top_k(self, query: Any, top_n: int, k: int, used: Collection[int]) -> List[int]:
        """
        Up to k ids among the top_n that are not in ``used``, in rank order.

        May return fewer than k ids when the top_n are mostly used.
        """
        if k > top_n:
            raise ContractError(f"k ({k}) must not exceed top_n ({top_n})")
        if k <= 0:
            return []
        result: List[int] = []
        for candidate in self.search(query, top_n):
            if candidate in used:
                continue
            result.append(candidate)
            if len(result) == k:
                break
        return result

    def search_many(self, queries: Any, top_n: int, n_jobs: int = 1) -> List[List[int]]:
        """Search several queries; the output matches sequential search exactly."""
        rows = np.asarray(queries, dtype=np.float64)
        if rows.ndim != 2:
            raise ShapeError(f"queries must be 2-D, got shape {rows.shape}")
        if n_jobs <= 1 or rows.shape[0] <= 1:
            return [self.search(row, top_n) for row in rows]
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(lambda row: self.search(row, top_n), rows))


def build(vectors: Any, ids: Sequence[int], metric: str = "cosine") -> FlatIndex:
    return FlatIndex.build(vectors, ids, metric)


def search(index: FlatIndex, query: Any, top_n: int) -> List[int]:
    return index.search(query, top_n)


def filtered_top_k(index: FlatIndex, query: Any, top_n: int, k: int, used: Collection[int]) -> List[int]:
    return index.filtered_top_k(query, top_n, k, used)


def search_many(index: FlatIndex, queries: Any, top_n: int, n_jobs: int = 1) -> List[List[int]]:
    return index.search_many(queries, top_n, n_jobs)
