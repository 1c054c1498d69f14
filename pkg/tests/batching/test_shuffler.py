"""
Tests for the batch-construction shuffle modes.
"""

import numpy as np
import pytest

from src.batching.records import PairRecord
from src.batching.shuffler import (
    DEFAULT_STOPWORDS, EMPTY_SHINGLE, Shuffler, batches_from_sequence, cluster_shuffle,
    example_based_shuffle, group_by_shingles, load_stopwords, neighbor_shingle_shuffle, neighbor_shingles,
    random_shuffle, sample_shingle, shingle_shuffle, text_shingle, tokenize
)
from src.common.config_loader import ShuffleConfig
from src.common.error_handler import ContractError

from .test_base import BatchingTestBase


def shuffle_config(**overrides) -> ShuffleConfig:
    values = {"group_size": 4, "candidate_pool": 10, "metric": "euclidean", "seed": 0}
    values.update(overrides)
    return ShuffleConfig(**values)


@pytest.mark.unit
@pytest.mark.batching
class TestSimpleModes(BatchingTestBase):
    """Test cases for the none and random modes."""

    def test_none_keeps_order(self):
        records = self.make_records(5)
        sequence = Shuffler(mode="none").shuffle(records)
        assert sequence.record_ids == [r.record_id for r in records]
        assert len(sequence.boundaries) == 5

    def test_random_is_seeded_permutation(self):
        records = self.make_records(20)
        first = random_shuffle(records, seed=5)
        assert first.is_permutation_of([r.record_id for r in records])
        assert first.record_ids == random_shuffle(records, seed=5).record_ids
        assert first.record_ids != random_shuffle(records, seed=6).record_ids

    def test_empty_dataset(self):
        for mode in ("none", "random", "words"):
            assert len(Shuffler(mode=mode).shuffle([])) == 0


@pytest.mark.unit
@pytest.mark.batching
class TestExampleBasedShuffle(BatchingTestBase):
    """Test cases for nearest-neighbor grouping."""

    def test_every_record_used_once_and_groups_bounded(self, rng):
        records = self.make_records(30)
        embeddings = rng.standard_normal((30, 3))
        sequence = example_based_shuffle(records, embeddings, shuffle_config())
        assert sequence.is_permutation_of([r.record_id for r in records])
        assert len(set(sequence.record_ids)) == 30
        assert max(len(g) for g in sequence.groups) <= 4

    def test_groups_collect_near_neighbors(self, clustered_points):
        records = self.make_records(30)
        sequence = example_based_shuffle(records, clustered_points, shuffle_config(group_size=10))
        blob_of = {r.record_id: i // 10 for i, r in enumerate(records)}
        for group in sequence.groups:
            assert len({blob_of[rid] for rid in group}) == 1

    def test_first_group_formed_is_emitted_last(self):
        records = self.make_records(4)
        embeddings = np.array([[0.0], [1.0], [10.0], [11.0]])
        sequence = example_based_shuffle(records, embeddings, shuffle_config(group_size=2, candidate_pool=3))
        groups = sequence.groups
        assert sorted(sorted(g) for g in groups) == [["r000", "r001"], ["r002", "r003"]]
        # The anchor leads its group.
        visit = np.random.default_rng(0).permutation(4)
        first_anchor = records[int(visit[0])].record_id
        assert groups[-1][0] == first_anchor

    def test_group_size_one_gives_singletons(self, rng):
        records = self.make_records(6)
        sequence = example_based_shuffle(records, rng.standard_normal((6, 2)), shuffle_config(group_size=1))
        assert all(len(g) == 1 for g in sequence.groups)

    def test_filter_identical(self):
        records = self.make_records(4)
        embeddings = np.array([[1.0, 0.0], [1.0, 0.0], [0.9, 0.1], [0.0, 1.0]])
        sequence = example_based_shuffle(
            records, embeddings, shuffle_config(group_size=2, filter_identical=True, metric="cosine")
        )
        for group in sequence.groups:
            assert sorted(group) != ["r000", "r001"]

    @pytest.mark.parametrize("filter_identical", [False, True])
    def test_thread_count_does_not_change_groups(self, rng, filter_identical):
        records = self.make_records(60)
        embeddings = rng.standard_normal((60, 4))
        embeddings[7] = embeddings[3]
        sequences = [
            example_based_shuffle(
                records, embeddings, shuffle_config(group_size=5, candidate_pool=20, filter_identical=filter_identical, n_jobs=n)
            )
            for n in (1, 4)
        ]
        assert sequences[0] == sequences[1]

    def test_embeddings_by_id(self, rng):
        records = self.make_records(5)
        vectors = rng.standard_normal((5, 2))
        by_id = {r.record_id: vectors[i] for i, r in enumerate(records)}
        cfg = shuffle_config()
        assert (example_based_shuffle(records, by_id, cfg).record_ids
                == example_based_shuffle(records, vectors, cfg).record_ids)

    def test_missing_embedding(self, rng):
        records = self.make_records(3)
        with pytest.raises(ContractError):
            example_based_shuffle(records, {"r000": [1.0, 0.0]}, shuffle_config())


@pytest.mark.unit
@pytest.mark.batching
class TestShingles(BatchingTestBase):
    """Test cases for the word, cluster and neighbor shingle modes."""

    def test_tokenize(self):
        assert tokenize("What's the BEST way, 2 go?") == ["what", "s", "the", "best", "way", "2", "go"]

    def test_text_shingle_drops_stopwords(self, rng):
        shingle = text_shingle("the cat and the hat", 5, DEFAULT_STOPWORDS, rng)
        assert shingle == "cat hat"

    def test_text_shingle_of_stopwords_only(self, rng):
        assert text_shingle("and the of", 2, DEFAULT_STOPWORDS, rng) == EMPTY_SHINGLE

    def test_load_stopwords(self, temp_dir):
        path = temp_dir / "stop.txt"
        path.write_text("# comment\nFoo\n\nbar\n", encoding="utf-8")
        assert load_stopwords(path) == frozenset({"foo", "bar"})

    def test_group_by_shingles_caps_groups(self, rng):
        records = self.make_records(7)
        shingles = ["x"] * 5 + ["y"] * 2
        sequence = group_by_shingles(records, shingles, 2, rng)
        assert sequence.is_permutation_of([r.record_id for r in records])
        shingle_of = {r.record_id: s for r, s in zip(records, shingles)}
        sizes = []
        for group in sequence.groups:
            assert len({shingle_of[rid] for rid in group}) == 1
            sizes.append(len(group))
        assert sorted(sizes) == [1, 2, 2, 2]

    def test_word_shuffle_groups_shared_words(self):
        records = [
            PairRecord("a1", "apple pie", "x"), PairRecord("b1", "banana bread", "x"),
            PairRecord("a2", "pie apple", "x"), PairRecord("b2", "bread banana", "x"),
        ]
        sequence = shingle_shuffle(records, shuffle_config(group_size=2, shingle_size=2))
        assert sorted(sorted(g) for g in sequence.groups) == [["a1", "a2"], ["b1", "b2"]]

    def test_word_shuffle_deterministic(self):
        records = self.make_records(25)
        cfg = shuffle_config(shingle_size=1)
        assert shingle_shuffle(records, cfg).record_ids == shingle_shuffle(records, cfg).record_ids

    def test_cluster_shuffle_groups_by_cluster(self, clustered_points):
        records = self.make_records(30)
        sequence = cluster_shuffle(records, clustered_points, 3, shuffle_config(group_size=10))
        blob_of = {r.record_id: i // 10 for i, r in enumerate(records)}
        assert len(sequence.groups) == 3
        for group in sequence.groups:
            assert len({blob_of[rid] for rid in group}) == 1

    def test_cluster_shuffle_rejects_large_k(self, rng):
        records = self.make_records(4)
        with pytest.raises(ContractError):
            cluster_shuffle(records, rng.standard_normal((4, 2)), 5, shuffle_config())

    def test_neighbor_shuffle_pairs_mutual_neighbors(self):
        records = self.make_records(4)
        embeddings = np.array([[0.0], [0.1], [5.0], [5.1]])
        sequence = neighbor_shingle_shuffle(records, embeddings, shuffle_config(group_size=4), k=2)
        assert sorted(sorted(g) for g in sequence.groups) == [["r000", "r001"], ["r002", "r003"]]

    def test_sample_shingle_takes_distinct_words(self, rng):
        shingle = sample_shingle(["b", "a", "b", "c"], 2, rng)
        words = shingle.split()
        assert len(words) == 2
        assert words == sorted(set(words))
        assert set(words) <= {"a", "b", "c"}
        assert sample_shingle([], 2, rng) == EMPTY_SHINGLE

    def test_neighbor_shingles_sample_t_positions_of_the_neighborhood(self, rng):
        E = rng.standard_normal((25, 3))
        cfg = shuffle_config(shingle_size=2)
        shingles = neighbor_shingles(E, 6, cfg, np.random.default_rng(0))
        for i, shingle in enumerate(shingles):
            positions = [int(p) for p in shingle.split()]
            assert len(positions) == 2
            assert set(positions) <= set(self.brute_force_search(E, E[i], 6, "euclidean"))

    def test_neighbor_shingles_are_seeded(self, rng):
        E = rng.standard_normal((25, 3))
        cfg = shuffle_config(shingle_size=2)
        first = neighbor_shingles(E, 6, cfg, np.random.default_rng(0))
        assert first == neighbor_shingles(E, 6, cfg, np.random.default_rng(0))
        assert first == neighbor_shingles(E, 6, shuffle_config(shingle_size=2, n_jobs=4), np.random.default_rng(0))
        assert first != neighbor_shingles(E, 6, cfg, np.random.default_rng(1))

    def test_neighbor_shingle_covering_the_neighborhood(self, rng):
        E = rng.standard_normal((10, 2))
        shingles = neighbor_shingles(E, 3, shuffle_config(shingle_size=5), np.random.default_rng(0))
        for i, shingle in enumerate(shingles):
            expected = sorted(f"{p:09d}" for p in self.brute_force_search(E, E[i], 3, "euclidean"))
            assert shingle == " ".join(expected)

    def test_neighbor_shuffle_rejects_zero_k(self, rng):
        with pytest.raises(ContractError):
            neighbor_shingle_shuffle(self.make_records(3), rng.standard_normal((3, 2)), shuffle_config(), k=0)


@pytest.mark.unit
@pytest.mark.batching
class TestShuffler(BatchingTestBase):
    """Test cases for the Shuffler front end."""

    @pytest.mark.parametrize("mode", ["none", "random", "example_knn", "words", "clusters", "neighbors"])
    def test_every_mode_is_a_permutation(self, rng, mode):
        records = self.make_records(24)
        shuffler = Shuffler(mode=mode, group_size=4, candidate_pool=8, k_clusters=4)
        embeddings = rng.standard_normal((24, 3)) if shuffler.requires_embeddings else None
        sequence = shuffler.shuffle(records, embeddings)
        assert sequence.is_permutation_of([r.record_id for r in records])

    def test_embedding_modes_need_embeddings(self):
        with pytest.raises(ContractError):
            Shuffler(mode="clusters").shuffle(self.make_records(3))

    def test_from_config_overrides(self):
        shuffler = Shuffler.from_config(ShuffleConfig(mode="random", seed=1), seed=9)
        assert shuffler.config.seed == 9
        assert shuffler.config.mode == "random"

    def test_batches_drop_short_tail(self):
        sequence = Shuffler(mode="none").shuffle(self.make_records(7))
        assert [len(b) for b in batches_from_sequence(sequence, 3, min_last_batch=2)] == [3, 3]
        assert [len(b) for b in batches_from_sequence(sequence, 3, min_last_batch=1)] == [3, 3, 1]
        assert [len(b) for b in batches_from_sequence(sequence, 2, min_last_batch=2)] == [2, 2, 2]
