"""Product quantization with 256 centroids per subspace (one byte per code).

Codebooks are trained with a seeded Lloyd k-means per subspace and queried
through asymmetric distance tables: for a query, ``table[j, c]`` holds the
partial ordering key between the query's j-th subvector and centroid ``c``
of subspace ``j``; the PQ key of a code is the sum of one entry per row.
"""

from __future__ import annotations

import functools
import hashlib
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, Metric

KSUB = 256
CODEBOOK_MAGIC = b"PQCB"
CODEBOOK_VERSION = 1
_HEADER = struct.Struct("<4sIIIB")


def split_dims(d: int, m: int) -> tuple[int, ...]:
    """Contiguous subspace widths; the first ``d % m`` subspaces get one extra dim."""
    if m < 1:
        raise ValueError("m must be positive")
    if m > d:
        raise ValueError(f"m={m} exceeds dimensionality d={d}")
    base, extra = divmod(d, m)
    return tuple(base + 1 if j < extra else base for j in range(m))


@dataclass(frozen=True, eq=False)
class PQCodebook:
    centroids: tuple[np.ndarray, ...]  # m arrays of shape (256, subdim), float32
    metric: Metric = Metric.L2
    subdims: tuple[int, ...] = field(init=False)
    offsets: tuple[int, ...] = field(init=False)

    def __post_init__(self) -> None:
        cents = tuple(np.ascontiguousarray(c, dtype=np.float32) for c in self.centroids)
        for c in cents:
            if c.ndim != 2 or c.shape[0] != KSUB:
                raise ValueError(f"each subspace needs {KSUB} centroids, got shape {c.shape}")
        object.__setattr__(self, "centroids", cents)
        object.__setattr__(self, "metric", Metric.parse(self.metric))
        object.__setattr__(self, "subdims", tuple(c.shape[1] for c in cents))
        object.__setattr__(self, "offsets", tuple(int(x) for x in np.cumsum((0,) + self.subdims)))

    @property
    def m(self) -> int:
        return len(self.centroids)

    @property
    def d(self) -> int:
        return self.offsets[-1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PQCodebook):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    __hash__ = None  # type: ignore[assignment]

    # -- serialization ----------------------------------------------------
    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(_HEADER.pack(CODEBOOK_MAGIC, CODEBOOK_VERSION, self.d, self.m, int(self.metric)))
        buf.write(np.asarray(self.subdims, dtype="<u4").tobytes())
        for c in self.centroids:
            buf.write(c.astype("<f4").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PQCodebook":
        if len(blob) < _HEADER.size:
            raise ValueError("codebook blob truncated in header")
        magic, version, d, m, metric = _HEADER.unpack_from(blob, 0)
        if magic != CODEBOOK_MAGIC:
            raise ValueError(f"bad codebook magic {magic!r}")
        if version != CODEBOOK_VERSION:
            raise ValueError(f"unsupported codebook version {version}")
        pos = _HEADER.size
        subdims = np.frombuffer(blob, dtype="<u4", count=m, offset=pos).astype(int)
        pos += 4 * m
        if int(subdims.sum()) != d:
            raise ValueError("codebook subdims do not sum to d")
        need = pos + 4 * KSUB * d
        if len(blob) < need:
            raise ValueError(f"codebook blob truncated: {len(blob)} < {need} bytes")
        cents = []
        for sd in subdims:
            cents.append(np.frombuffer(blob, dtype="<f4", count=KSUB * sd, offset=pos).reshape(KSUB, sd))
            pos += 4 * KSUB * int(sd)
        return cls(tuple(cents), Metric(metric))

    @functools.cached_property
    def _sha256(self) -> bytes:
        return hashlib.sha256(self.to_bytes()).digest()

    def content_hash(self) -> bytes:
        return self._sha256

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "PQCodebook":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())

    @property
    def nbytes(self) -> int:
        return _HEADER.size + 4 * self.m + 4 * KSUB * self.d

    # -- coding -------------------------------------------------------------
    def subvectors(self, x: np.ndarray, j: int) -> np.ndarray:
        return x[..., self.offsets[j] : self.offsets[j + 1]]

    def decode(self, codes) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.uint8)
        single = codes.ndim == 1
        codes = np.atleast_2d(codes)
        out = np.empty((codes.shape[0], self.d), dtype=np.float32)
        for j, c in enumerate(self.centroids):
            out[:, self.offsets[j] : self.offsets[j + 1]] = c[codes[:, j]]
        return out[0] if single else out


def _nearest_centroid(x: np.ndarray, cents: np.ndarray, chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Index of (and squared distance to) the nearest centroid, ties -> lowest index."""
    n = x.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    c = cents.astype(np.float64)
    for s in range(0, n, chunk):
        xs = x[s : s + chunk].astype(np.float64)
        diff = xs[:, None, :] - c[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        a = np.argmin(d2, axis=1)
        idx[s : s + chunk] = a
        dist[s : s + chunk] = d2[np.arange(len(a)), a]
    return idx, dist


def _fast_assign(x: np.ndarray, c: np.ndarray, chunk: int = 16384) -> tuple[np.ndarray, np.ndarray]:
    # expanded-norm form; used only inside training where exactness of ties is irrelevant
    cn = np.einsum("ij,ij->i", c, c)
    n = x.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    for s in range(0, n, chunk):
        xs = x[s : s + chunk]
        d2 = cn[None, :] - 2.0 * (xs @ c.T)
        a = np.argmin(d2, axis=1)
        idx[s : s + chunk] = a
        dist[s : s + chunk] = np.maximum(d2[np.arange(len(a)), a] + np.einsum("ij,ij->i", xs, xs), 0.0)
    return idx, dist


def kmeans(x: np.ndarray, k: int, iterations: int, rng: np.random.Generator) -> np.ndarray:
    """Lloyd k-means returning ``k`` centroids.

    Initial centroids are ``k`` distinct points drawn without replacement. If
    the data has at most ``k`` distinct points those points are the exact
    answer and are returned (cycled to fill ``k`` slots). Empty clusters are
    re-seeded with the points farthest from their current centroid.
    """
    x = np.asarray(x, dtype=np.float64)
    uniq = np.unique(x, axis=0)
    if len(uniq) <= k:
        return uniq[np.arange(k) % len(uniq)]
    cent = uniq[np.sort(rng.choice(len(uniq), size=k, replace=False))].copy()
    assign = None
    for _ in range(iterations):
        new_assign, dist = _fast_assign(x, cent)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(cent)
        np.add.at(sums, assign, x)
        nz = counts > 0
        cent[nz] = sums[nz] / counts[nz, None]
        empty = np.flatnonzero(~nz)
        if empty.size:
            far = np.lexsort((np.arange(len(x)), -dist))
            for c, p in zip(empty, far):
                cent[c] = x[p]
                assign[p] = c
    return cent


def train_pq(dataset: Dataset, m: int, iterations: int = 12, seed: int = 0,
             max_train: int | None = None) -> PQCodebook:
    """Train an m-subspace, 256-centroid codebook with Euclidean k-means.

    ``max_train`` caps the number of training rows (seeded subsample).
    """
    if dataset.n < 1:
        raise ValueError("empty dataset")
    subdims = split_dims(dataset.d, m)
    x = dataset.vectors.astype(np.float64)
    rng = np.random.default_rng(seed)
    if max_train is not None and x.shape[0] > max_train:
        x = x[np.sort(rng.choice(x.shape[0], size=max_train, replace=False))]
    offsets = np.cumsum((0,) + subdims)
    cents = []
    for j in range(m):
        sub_rng = np.random.default_rng([seed, j])
        cents.append(kmeans(x[:, offsets[j] : offsets[j + 1]], KSUB, iterations, sub_rng).astype(np.float32))
    return PQCodebook(tuple(cents), dataset.metric)


def encode(vectors, codebook: PQCodebook) -> np.ndarray:
    """Nearest-centroid code per subspace; a single vector yields shape (m,)."""
    x = np.asarray(vectors)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != codebook.d:
        raise ValueError(f"dimensionality mismatch: {x.shape[1]} != {codebook.d}")
    codes = np.empty((x.shape[0], codebook.m), dtype=np.uint8)
    for j, c in enumerate(codebook.centroids):
        codes[:, j] = _nearest_centroid(codebook.subvectors(x, j), c)[0]
    return codes[0] if single else codes


def build_distance_table(query, codebook: PQCodebook) -> np.ndarray:
    """m x 256 float64 table of per-subspace ordering keys for ``query``."""
    q = np.asarray(query, dtype=np.float64).ravel()
    if q.shape[0] != codebook.d:
        raise ValueError(f"dimensionality mismatch: {q.shape[0]} != {codebook.d}")
    table = np.empty((codebook.m, KSUB), dtype=np.float64)
    for j, c in enumerate(codebook.centroids):
        qj = codebook.subvectors(q, j)
        cj = c.astype(np.float64)
        if codebook.metric is Metric.L2:
            diff = cj - qj
            table[j] = np.einsum("ij,ij->i", diff, diff)
        else:
            table[j] = -(cj @ qj)
    return table


def pq_distances(codes: np.ndarray, table: np.ndarray) -> np.ndarray:
    """PQ keys for a (k, m) block of codes."""
    codes = np.asarray(codes)
    if codes.ndim != 2 or codes.shape[1] != table.shape[0]:
        raise ValueError(f"codes shape {codes.shape} does not match table with m={table.shape[0]}")
    rows = np.arange(table.shape[0])
    return table[rows, codes].sum(axis=1)


def pq_distance(code, table: np.ndarray) -> float:
    code = np.asarray(code, dtype=np.intp).ravel()
    if code.shape[0] != table.shape[0]:
        raise ValueError(f"code length {code.shape[0]} != table m {table.shape[0]}")
    return float(pq_distances(code[None, :], table)[0])
