"""
Batch construction by shuffling.

Every mode returns a ShuffledSequence that is an exact permutation of the
dataset's record ids. Consecutive slices of the sequence become batches, so
records placed in the same group end up as each other's in-batch negatives.

Modes:
    none         dataset order, singleton groups
    random       seeded uniform permutation, singleton groups
    example_knn  nearest-neighbor groups of size <= s, emitted in reverse order
    words        groups of records sharing a random t-word shingle
    clusters     groups of records sharing a k-means cluster
    neighbors    groups of records sharing their top-k neighbor positions
"""

import re
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
from loguru import logger

from ..common.config_loader import ShuffleConfig
from ..common.error_handler import ContractError
from .kmeans import kmeans
from .knn_index import FlatIndex
from .records import PairRecord, ShuffledSequence

EMPTY_SHINGLE = "<empty>"

DEFAULT_STOPWORDS: FrozenSet[str] = frozenset(
    """
    a an and are as at be but by for from has have he her his i if in into is it its
    me my no not of on or our she so that the their them then there these they this
    to was we were what when which who will with you your
    """.split()
)

EMBEDDING_MODES = ("example_knn", "clusters", "neighbors")

_TOKEN_RE = re.compile(r"[a-z0-9]+")

Embeddings = Union[np.ndarray, Mapping[str, Any]]


def tokenize(text: str) -> List[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def load_stopwords(path: Union[str, Path]) -> FrozenSet[str]:
    """One stop word per line; blank lines and '#' comments ignored."""
    words = set()
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            word = line.strip().lower()
            if word and not word.startswith("#"):
                words.add(word)
    return frozenset(words)


def resolve_stopwords(cfg: ShuffleConfig) -> FrozenSet[str]:
    if cfg.stopwords_file:
        return load_stopwords(cfg.stopwords_file)
    if cfg.stopwords is not None:
        return frozenset(w.lower() for w in cfg.stopwords)
    return DEFAULT_STOPWORDS


def embedding_matrix(dataset: Sequence[PairRecord], embeddings: Embeddings) -> np.ndarray:
    """
    Align embeddings with the dataset order.

    Args:
        dataset: Records
        embeddings: (N, n) matrix in dataset order, or a mapping record_id -> vector

    Raises:
        ContractError: if a record has no embedding
    """
    if isinstance(embeddings, Mapping):
        missing = [r.record_id for r in dataset if r.record_id not in embeddings]
        if missing:
            raise ContractError(f"no embedding for record(s) {missing[:5]}")
        return np.vstack([np.asarray(embeddings[r.record_id], dtype=np.float64) for r in dataset])

    matrix = np.asarray(embeddings, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != len(dataset):
        raise ContractError(f"expected one embedding per record ({len(dataset)}), got array of shape {matrix.shape}")
    return matrix


def no_shuffle(dataset: Sequence[PairRecord]) -> ShuffledSequence:
    """Keep the dataset order."""
    return ShuffledSequence.from_groups([[r.record_id] for r in dataset])


def random_shuffle(dataset: Sequence[PairRecord], seed: int) -> ShuffledSequence:
    """Uniform permutation by seed; every group is a singleton."""
    perm = np.random.default_rng(seed).permutation(len(dataset))
    return ShuffledSequence.from_groups([[dataset[i].record_id] for i in perm])


def example_based_shuffle(dataset: Sequence[PairRecord], embeddings: Embeddings, cfg: ShuffleConfig) -> ShuffledSequence:
    """
    Group every record with its nearest unused neighbors.

    The dataset is visited in a seeded random order. Each unused record
    becomes an anchor and pulls up to s - 1 unused records from its top-n
    neighbors; the group is the anchor followed by the neighbors in rank
    order. Groups are emitted in reverse order of formation, so the late
    groups (mostly singletons) come first. With n_jobs > 1 every record's
    neighbor list is searched up front on a thread pool; the groups are the same.

    Args:
        dataset: Records to order
        embeddings: Embeddings of the grouping element under the current model
        cfg: Shuffle configuration (group_size, candidate_pool, filter_identical, seed, metric, n_jobs)

    Returns:
        ShuffledSequence
    """
    if not dataset:
        return ShuffledSequence(record_ids=[], group_ids=[])
    E = embedding_matrix(dataset, embeddings)
    N = len(dataset)
    rng = np.random.default_rng(cfg.seed)
    visit_order = rng.permutation(N)

    index = FlatIndex.build(E, ids=np.arange(N), metric=cfg.metric)
    top_n = max(1, min(cfg.candidate_pool, N))
    k = min(cfg.group_size - 1, top_n)
    ranked = index.search_many(E, top_n, n_jobs=cfg.n_jobs) if k > 0 and cfg.n_jobs > 1 else None

    used = set()
    groups: List[List[int]] = []
    for anchor in visit_order:
        anchor = int(anchor)
        if anchor in used:
            continue
        used.add(anchor)

        neighbors: List[int] = []
        if k > 0:
            if ranked is not None:
                fresh = [j for j in ranked[anchor] if j not in used]
            else:
                fresh = index.filtered_top_k(E[anchor], top_n, top_n, used)
            if cfg.filter_identical:
                fresh = [j for j in fresh if not np.array_equal(E[j], E[anchor])]
            neighbors = fresh[:k]
        used.update(neighbors)
        groups.append([anchor] + neighbors)

    groups.reverse()
    sizes = np.bincount([len(g) for g in groups])
    logger.debug(f"Example-based shuffle formed {len(groups)} groups (size histogram {sizes.tolist()})")
    return ShuffledSequence.from_groups([[dataset[i].record_id for i in group] for group in groups])


def _draw_group_id(rng: np.random.Generator, taken: set) -> int:
    while True:
        gid = int(rng.integers(0, np.iinfo(np.uint64).max, dtype=np.uint64, endpoint=True))
        if gid not in taken:
            taken.add(gid)
            return gid


def group_by_shingles(
    dataset: Sequence[PairRecord], shingles: Sequence[str], group_cap: int, rng: np.random.Generator
) -> ShuffledSequence:
    """
    Sort records by shingle, cut groups of at most ``group_cap`` sharing a
    shingle, give every group a fresh random 64-bit id and sort by that id.
    """
    if group_cap < 1:
        raise ContractError(f"group cap must be >= 1, got {group_cap}")
    order = sorted(range(len(dataset)), key=lambda i: shingles[i])

    taken: set = set()
    assigned: List[int] = [0] * len(dataset)
    previous: Optional[str] = None
    size = 0
    gid = 0
    for i in order:
        if previous is None or shingles[i] != previous or size >= group_cap:
            gid = _draw_group_id(rng, taken)
            size = 0
        assigned[i] = gid
        size += 1
        previous = shingles[i]

    final = sorted(order, key=lambda i: assigned[i])
    return ShuffledSequence(
        record_ids=[dataset[i].record_id for i in final],
        group_ids=[assigned[i] for i in final],
    )


def sample_shingle(words: Iterable[str], size: int, rng: np.random.Generator) -> str:
    """Random subset of min(size, #distinct words) words, sorted and space-joined."""
    distinct = sorted(set(words))
    if not distinct:
        return EMPTY_SHINGLE
    take = min(size, len(distinct))
    picked = rng.choice(len(distinct), size=take, replace=False)
    return " ".join(sorted(distinct[i] for i in picked))


def text_shingle(text: str, size: int, stopwords: FrozenSet[str], rng: np.random.Generator) -> str:
    """Shingle of the non-stop words of a text."""
    return sample_shingle((w for w in tokenize(text) if w not in stopwords), size, rng)


def shingle_shuffle(dataset: Sequence[PairRecord], cfg: ShuffleConfig) -> ShuffledSequence:
    """Group records whose grouping text shares a random shingle of t words."""
    rng = np.random.default_rng(cfg.seed)
    stopwords = resolve_stopwords(cfg)
    shingles = [text_shingle(r.text(cfg.element), cfg.shingle_size, stopwords, rng) for r in dataset]
    return group_by_shingles(dataset, shingles, cfg.group_size, rng)


def cluster_shuffle(
    dataset: Sequence[PairRecord], embeddings: Embeddings, k_clusters: int, cfg: ShuffleConfig
) -> ShuffledSequence:
    """Group records by k-means cluster: the shingle is the cluster id."""
    if not dataset:
        return ShuffledSequence(record_ids=[], group_ids=[])
    if k_clusters > len(dataset):
        raise ContractError(f"k_clusters ({k_clusters}) exceeds the dataset size ({len(dataset)})")
    E = embedding_matrix(dataset, embeddings)
    result = kmeans(E, k_clusters, max_iters=cfg.kmeans_max_iters, seed=cfg.seed)
    shingles = [f"{label:08d}" for label in result.labels]
    return group_by_shingles(dataset, shingles, cfg.group_size, np.random.default_rng(cfg.seed))


def neighbor_shingles(E: np.ndarray, k: int, cfg: ShuffleConfig, rng: np.random.Generator) -> List[str]:
    """
    Word shingles whose words are neighbor positions.

    Each record's words are the positions of its k nearest neighbors (the
    record itself included); its shingle is a random subset of
    ``cfg.shingle_size`` of them.
    """
    index = FlatIndex.build(E, ids=np.arange(E.shape[0]), metric=cfg.metric)
    neighbor_lists = index.search_many(E, top_n=min(k, E.shape[0]), n_jobs=cfg.n_jobs)
    return [sample_shingle((f"{p:09d}" for p in positions), cfg.shingle_size, rng) for positions in neighbor_lists]


def neighbor_shingle_shuffle(
    dataset: Sequence[PairRecord], embeddings: Embeddings, cfg: ShuffleConfig, k: Optional[int] = None
) -> ShuffledSequence:
    """Group records that share a shingle of their top-k neighbor positions."""
    k = cfg.neighbor_k if k is None else k
    if k < 1:
        raise ContractError(f"neighbor count must be >= 1, got {k}")
    if not dataset:
        return ShuffledSequence(record_ids=[], group_ids=[])
    rng = np.random.default_rng(cfg.seed)
    shingles = neighbor_shingles(embedding_matrix(dataset, embeddings), k, cfg, rng)
    return group_by_shingles(dataset, shingles, cfg.group_size, rng)


class Shuffler:
    """
    Applies the configured shuffle mode to a dataset.

    Modes that need embeddings (example_knn, clusters, neighbors) take them
    from the caller, encoded by the current model.
    """

    def __init__(self, config: Optional[Dict[str, Any]] = None, **kwargs):
        """
        Initialize the Shuffler.

        Args:
            config: Optional configuration dictionary (ShuffleConfig keys)
            **kwargs: Additional configuration parameters
        """
        self.logger = logger
        self.default_config = ShuffleConfig().model_dump()

        merged = dict(self.default_config)
        merged.update(config or {})
        merged.update(kwargs)
        self.config = ShuffleConfig(**merged)

    @classmethod
    def from_config(cls, cfg: ShuffleConfig, **overrides: Any) -> "Shuffler":
        return cls(cfg.model_dump(), **overrides)

    @property
    def requires_embeddings(self) -> bool:
        return self.config.mode in EMBEDDING_MODES

    def shuffle(self, dataset: Sequence[PairRecord], embeddings: Optional[Embeddings] = None) -> ShuffledSequence:
        """
        Order the dataset for batching.

        Args:
            dataset: Records
            embeddings: Required for embedding-based modes

        Returns:
            ShuffledSequence
        """
        cfg = self.config
        mode = cfg.mode
        if mode in EMBEDDING_MODES and embeddings is None:
            raise ContractError(f"shuffle mode '{mode}' requires embeddings")

        if mode == "none":
            sequence = no_shuffle(dataset)
        elif mode == "random":
            sequence = random_shuffle(dataset, cfg.seed)
        elif mode == "example_knn":
            sequence = example_based_shuffle(dataset, embeddings, cfg)
        elif mode == "words":
            sequence = shingle_shuffle(dataset, cfg)
        elif mode == "clusters":
            sequence = cluster_shuffle(dataset, embeddings, cfg.k_clusters, cfg)
        else:
            sequence = neighbor_shingle_shuffle(dataset, embeddings, cfg)

        self.logger.debug(f"Shuffled {len(dataset)} records with mode '{mode}' into {len(sequence.boundaries)} groups")
        return sequence


def batches_from_sequence(
    sequence: ShuffledSequence, batch_size: int, min_last_batch: int = 1
) -> List[List[str]]:
    """
    Slice a shuffled sequence into consecutive batches.

    The final partial batch is kept only if it has at least ``min_last_batch`` rows.
    """
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    ids = sequence.record_ids
    batches = [list(ids[i:i + batch_size]) for i in range(0, len(ids), batch_size)]
    if batches and len(batches[-1]) < min(batch_size, min_last_batch):
        batches.pop()
    return batches


def iter_texts(dataset: Iterable[PairRecord], element: str) -> List[str]:
    return [r.text(element) for r in dataset]
