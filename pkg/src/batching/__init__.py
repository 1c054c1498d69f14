"""
Records, nearest-neighbor search and batch construction.

Key Components:
- PairRecord / ShuffledSequence / Triplet: dataset and ordering types
- FlatIndex: exact kNN over dot, cosine or euclidean similarity
- kmeans: Lloyd clustering with k-means++ seeding
- Shuffler: the six batch-construction modes
"""

from .records import PairRecord, ShuffledSequence, Triplet, build_triplets, check_unique_ids
from .knn_index import KNN_METRICS, FlatIndex
from .kmeans import KMeansResult, kmeans
from .shuffler import Shuffler, batches_from_sequence, iter_texts

__all__ = [
    'PairRecord',
    'ShuffledSequence',
    'Triplet',
    'build_triplets',
    'check_unique_ids',
    'KNN_METRICS',
    'FlatIndex',
    'KMeansResult',
    'kmeans',
    'Shuffler',
    'batches_from_sequence',
    'iter_texts'
]
