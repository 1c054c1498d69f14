"""
Deterministic k-means: k-means++ seeding followed by Lloyd iterations.
"""

from dataclasses import dataclass
from typing import Any, List

import numpy as np
from loguru import logger
from scipy.spatial.distance import cdist
from sklearn.cluster import kmeans_plusplus

from ..common.error_handler import ContractError
from ..losses.dense_core import as_embedding_matrix


@dataclass
class KMeansResult:
    """Cluster assignment with the inertia recorded after every assignment step."""

    labels: np.ndarray
    centroids: np.ndarray
    inertia_history: List[float]

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]

    @property
    def n_iter(self) -> int:
        return len(self.inertia_history)


def kmeans(embeddings: Any, k: int, max_iters: int = 100, seed: int = 0) -> KMeansResult:
    """
    Cluster rows of ``embeddings`` into k groups.

    Points go to the nearest centroid (lowest centroid index on ties); an
    empty cluster keeps its previous centroid. Iteration stops when the
    assignment no longer changes or after ``max_iters`` assignment steps.

    Args:
        embeddings: (N, n) points
        k: Number of clusters, 1 <= k <= N
        max_iters: Maximum number of assignment steps
        seed: Seed of the k-means++ initialization

    Returns:
        KMeansResult
    """
    if k <= 0:
        raise ContractError(f"k must be positive, got {k}")
    X = as_embedding_matrix(embeddings, "embeddings")
    if k > X.shape[0]:
        raise ContractError(f"k ({k}) exceeds the number of points ({X.shape[0]})")
    if max_iters < 1:
        raise ContractError(f"max_iters must be >= 1, got {max_iters}")

    centroids, _ = kmeans_plusplus(X, n_clusters=k, random_state=seed)
    centroids = np.asarray(centroids, dtype=np.float64)

    labels = np.full(X.shape[0], -1, dtype=np.int64)
    history: List[float] = []

    for iteration in range(max_iters):
        distances = cdist(X, centroids, "sqeuclidean")
        new_labels = np.argmin(distances, axis=1)
        history.append(float(distances[np.arange(X.shape[0]), new_labels].sum()))

        if np.array_equal(new_labels, labels):
            break
        labels = new_labels

        for cluster in range(k):
            members = X[labels == cluster]
            if members.shape[0] > 0:
                centroids[cluster] = members.mean(axis=0)

    logger.debug(f"k-means with k={k} stopped after {len(history)} assignment steps, inertia {history[-1]:.6g}")
    return KMeansResult(labels=labels, centroids=centroids, inertia_history=history)
