"""
Tests for the exact flat nearest-neighbor index.
"""

import numpy as np
import pytest

from src.batching.knn_index import KNN_METRICS, FlatIndex, filtered_top_k, search, search_many
from src.common.error_handler import ContractError, DegenerateInputError, ShapeError

from .test_base import BatchingTestBase


@pytest.mark.unit
@pytest.mark.batching
class TestFlatIndex(BatchingTestBase):
    """Test cases for FlatIndex."""

    @pytest.mark.parametrize("metric", KNN_METRICS)
    def test_matches_brute_force(self, rng, metric):
        vectors = rng.standard_normal((1000, 16))
        index = FlatIndex.build(vectors, ids=range(1000), metric=metric)
        for _ in range(20):
            query = rng.standard_normal(16)
            assert index.search(query, 10) == self.brute_force_search(vectors, query, 10, metric)

    def test_ties_broken_by_ascending_id(self):
        vectors = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        index = FlatIndex.build(vectors, ids=[30, 10, 5, 20], metric="dot")
        assert index.search([1.0, 0.0], 2) == [10, 20]
        assert index.search([1.0, 0.0], 4) == [10, 20, 30, 5]

    def test_top_n_larger_than_index(self, rng):
        index = FlatIndex.build(rng.standard_normal((3, 2)), ids=[0, 1, 2], metric="euclidean")
        assert sorted(index.search([0.0, 0.0], 10)) == [0, 1, 2]

    def test_vectors_are_read_only(self, rng):
        index = FlatIndex.build(rng.standard_normal((3, 2)), ids=[0, 1, 2])
        with pytest.raises(ValueError):
            index.vectors[0, 0] = 1.0

    def test_build_copies_input(self):
        vectors = np.array([[1.0, 0.0], [0.0, 1.0]])
        index = FlatIndex.build(vectors, ids=[0, 1], metric="dot")
        vectors[0] = [0.0, -1.0]
        assert index.search([1.0, 0.0], 1) == [0]

    def test_empty_index(self):
        with pytest.raises(ContractError):
            FlatIndex.build(np.zeros((0, 3)), ids=[])

    def test_duplicate_ids(self):
        with pytest.raises(ContractError):
            FlatIndex.build(np.eye(2), ids=[1, 1])

    def test_zero_query_under_cosine(self):
        index = FlatIndex.build(np.eye(2), ids=[0, 1], metric="cosine")
        with pytest.raises(DegenerateInputError):
            index.search([0.0, 0.0], 1)

    def test_query_dimension(self):
        index = FlatIndex.build(np.eye(2), ids=[0, 1])
        with pytest.raises(ShapeError):
            index.search([1.0, 0.0, 0.0], 1)

    def test_invalid_top_n(self):
        index = FlatIndex.build(np.eye(2), ids=[0, 1])
        with pytest.raises(ContractError):
            index.search([1.0, 0.0], 0)


@pytest.mark.unit
@pytest.mark.batching
class TestFilteredSearch(BatchingTestBase):
    """Test cases for filtered_top_k and search_many."""

    def test_skips_used_ids_in_rank_order(self, rng):
        vectors = rng.standard_normal((20, 4))
        index = FlatIndex.build(vectors, ids=range(20), metric="dot")
        query = vectors[0]
        full = search(index, query, 10)
        used = {full[0], full[2]}
        assert filtered_top_k(index, query, 10, 3, used) == [full[1], full[3], full[4]]

    def test_may_return_fewer_than_k(self):
        index = FlatIndex.build(np.eye(3), ids=[0, 1, 2], metric="dot")
        assert filtered_top_k(index, [1.0, 0.0, 0.0], 2, 2, used={0}) == [1]

    def test_k_must_not_exceed_top_n(self):
        index = FlatIndex.build(np.eye(3), ids=[0, 1, 2])
        with pytest.raises(ContractError):
            index.filtered_top_k([1.0, 0.0, 0.0], 1, 2, used=set())

    def test_parallel_search_matches_sequential(self, rng):
        vectors = rng.standard_normal((50, 5))
        queries = rng.standard_normal((12, 5))
        index = FlatIndex.build(vectors, ids=range(50), metric="cosine")
        assert search_many(index, queries, 5, n_jobs=4) == [index.search(q, 5) for q in queries]
