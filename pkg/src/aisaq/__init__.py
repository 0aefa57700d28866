"""Storage-resident graph ANN search with PQ codes kept inline in node chunks."""

from .core import Dataset, ElementKind, Metric, brute_force_knn, distance, groundtruth, recall_at_k
from .graph import BuildParams, VamanaGraph, build_vamana, greedy_search_build, medoid, robust_prune
from .layout import (
    ChunkGeometry, CorruptIndexError, IndexHandle, Mode, chunk_size, load_index_contents, node_offset,
    open_index, serialize_index, switch_index, validate_degree,
)
from .pq import PQCodebook, build_distance_table, encode, pq_distance, train_pq
from .search import SearchParams, batch_search, beam_search, search_identity_check
from .vecs import read_vecs, write_vecs

__version__ = "0.1.0"

__all__ = [
    "BuildParams", "ChunkGeometry", "CorruptIndexError", "Dataset", "ElementKind", "IndexHandle", "Metric",
    "Mode", "PQCodebook", "SearchParams", "VamanaGraph", "batch_search", "beam_search", "brute_force_knn",
    "build_distance_table", "build_vamana", "chunk_size", "distance", "encode", "greedy_search_build",
    "groundtruth", "load_index_contents", "medoid", "node_offset", "open_index", "pq_distance",
    "recall_at_k", "robust_prune", "search_identity_check", "serialize_index", "switch_index",
    "train_pq", "validate_degree", "read_vecs", "write_vecs",
]
