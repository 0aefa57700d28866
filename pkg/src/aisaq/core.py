"""Datasets, distance metrics and the exact brute-force k-NN baseline.

Every "distance" handled by this package is an *ordering key*: smaller means
closer. For squared Euclidean that is the plain sum of squared differences;
for maximum inner product it is the negated dot product. All keys are
accumulated in float64 regardless of the element type of the vectors.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Metric(enum.IntEnum):
    L2 = 0
    MIPS = 1

    @classmethod
    def parse(cls, value: "str | int | Metric") -> "Metric":
        if isinstance(value, Metric):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = value.strip().lower()
        if key in ("l2", "euclid", "euclidean", "sqeuclidean"):
            return cls.L2
        if key in ("mips", "ip", "inner_product", "innerproduct"):
            return cls.MIPS
        raise ValueError(f"unknown metric {value!r}")


class ElementKind(enum.IntEnum):
    FLOAT32 = 0
    UINT8 = 1

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32) if self is ElementKind.FLOAT32 else np.dtype(np.uint8)

    @property
    def itemsize(self) -> int:
        return self.dtype.itemsize

    @classmethod
    def of(cls, arr: np.ndarray) -> "ElementKind":
        if arr.dtype == np.float32:
            return cls.FLOAT32
        if arr.dtype == np.uint8:
            return cls.UINT8
        raise TypeError(f"unsupported element dtype {arr.dtype}; use float32 or uint8")


@dataclass(frozen=True)
class Dataset:
    """N x d vectors of one element kind plus the metric used to compare them."""

    vectors: np.ndarray
    metric: Metric = Metric.L2

    def __post_init__(self) -> None:
        vecs = self.vectors
        if vecs.ndim != 2:
            raise ValueError(f"dataset must be 2-D, got shape {vecs.shape}")
        if vecs.shape[0] < 1:
            raise ValueError("dataset is empty")
        if vecs.shape[1] < 1:
            raise ValueError("dataset has zero dimensionality")
        ElementKind.of(vecs)
        object.__setattr__(self, "vectors", np.ascontiguousarray(vecs))
        object.__setattr__(self, "metric", Metric.parse(self.metric))

    @classmethod
    def from_array(cls, data, metric="l2") -> "Dataset":
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.uint8):
            arr = arr.astype(np.float32)
        return cls(arr, Metric.parse(metric))

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @property
    def kind(self) -> ElementKind:
        return ElementKind.of(self.vectors)

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i) -> np.ndarray:
        return self.vectors[i]


def _check_dim(d_a: int, d_b: int) -> None:
    if d_a != d_b:
        raise ValueError(f"dimensionality mismatch: {d_a} != {d_b}")


def distance(a, b, metric="l2") -> float:
    """Ordering key between two vectors (smaller = closer)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    _check_dim(a.shape[0], b.shape[0])
    if Metric.parse(metric) is Metric.L2:
        diff = a - b
        return float(np.dot(diff, diff))
    return float(-np.dot(a, b))


def distances_to(vectors: np.ndarray, query, metric="l2") -> np.ndarray:
    """Ordering keys from ``query`` to each row of ``vectors`` (float64).

    This is the single full-precision kernel shared by the brute-force oracle
    and the re-ranking step of beam search, so both produce bit-identical keys.
    """
    q = np.asarray(query, dtype=np.float64).ravel()
    x = np.asarray(vectors)
    if x.ndim == 1:
        x = x[None, :]
    _check_dim(x.shape[1], q.shape[0])
    x = x.astype(np.float64, copy=False)
    # row-wise reductions only: a row's key must not depend on how many rows are batched
    if Metric.parse(metric) is Metric.L2:
        diff = x - q
        return (diff * diff).sum(axis=1)
    return -(x * q).sum(axis=1)


def topk_ordered(ids: np.ndarray, keys: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """First ``k`` (id, key) pairs ordered by key then ascending id."""
    order = np.lexsort((ids, keys))[:k]
    return ids[order], keys[order]


def brute_force_knn(dataset: Dataset, query, k: int, *, chunk: int = 65536) -> list[tuple[int, float]]:
    """Exact k nearest neighbours of ``query``, ties broken by ascending id."""
    if k < 1 or k > dataset.n:
        raise ValueError(f"k must be in [1, {dataset.n}], got {k}")
    q = np.asarray(query)
    _check_dim(dataset.d, q.shape[-1])
    keys = np.empty(dataset.n, dtype=np.float64)
    for start in range(0, dataset.n, chunk):
        keys[start : start + chunk] = distances_to(
            dataset.vectors[start : start + chunk], q, dataset.metric
        )
    ids, top = topk_ordered(np.arange(dataset.n, dtype=np.int64), keys, k)
    return [(int(i), float(dk)) for i, dk in zip(ids, top)]


def groundtruth(dataset: Dataset, queries: np.ndarray, k: int) -> np.ndarray:
    """Brute-force top-k ids for every query row, shape (nq, k)."""
    out = np.empty((len(queries), k), dtype=np.int64)
    for qi, q in enumerate(queries):
        out[qi] = [i for i, _ in brute_force_knn(dataset, q, k)]
    return out


def recall_at_k(result_ids, groundtruth_ids, k: int) -> float:
    """|top-k(result) & top-k(truth)| / k."""
    result_ids = list(result_ids)
    groundtruth_ids = list(groundtruth_ids)
    if k < 1:
        raise ValueError("k must be positive")
    if len(result_ids) < k or len(groundtruth_ids) < k:
        raise ValueError(
            f"need at least k={k} ids, got {len(result_ids)} results / {len(groundtruth_ids)} truth"
        )
    hits = set(int(i) for i in result_ids[:k]) & set(int(i) for i in groundtruth_ids[:k])
    return len(hits) / k
