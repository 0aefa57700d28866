"""Beam search with full-precision re-ranking over an on-disk index.

Both PQ sources run the same traversal:

* ``Mode.DISKANN`` scores out-neighbours with codes looked up in the N x m
  array held in RAM;
* ``Mode.AISAQ`` scores them with the codes stored inline in the chunk that
  was just read, then drops that chunk.

Entrypoints are scored with the codes kept in the index metadata in both
modes. Candidate selection and truncation order by (PQ key, id) and each
hop's chunks are processed in ascending id order, so two indices built from
the same graph and codes produce identical traces.
"""

from __future__ import annotations

import concurrent.futures as cf
import threading
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import distances_to, recall_at_k
from .layout import IndexHandle, Mode
from .pq import build_distance_table, pq_distances


@dataclass(frozen=True)
class SearchParams:
    k: int = 10
    L: int = 64
    w: int = 4
    mode: Mode | None = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.L < self.k:
            raise ValueError(f"L ({self.L}) must be >= k ({self.k})")
        if self.w < 1:
            raise ValueError("beamwidth w must be >= 1")
        if self.mode is not None:
            object.__setattr__(self, "mode", Mode.parse(self.mode))


@dataclass
class ResidencyMeter:
    """PQ codes held in memory during one query (entrypoint codes included)."""

    current: int = 0
    peak: int = 0

    def hold(self, count: int) -> None:
        self.current += count
        if self.current > self.peak:
            self.peak = self.current

    def release(self, count: int) -> None:
        self.current -= count


@dataclass
class SearchStats:
    hops: int = 0
    io_requests: int = 0
    bytes_read: int = 0
    pq_distance_computations: int = 0
    peak_resident_pq_codes: int = 0
    working_set_bytes: int = 0
    wall_seconds: float = 0.0
    io_path: str = ""
    mode: str = ""


@dataclass
class SearchOutcome:
    ids: list[int]
    distances: list[float]
    stats: SearchStats
    incomplete: bool = False  # fewer than k nodes were expanded
    expanded: list[int] = field(default_factory=list, repr=False)


class SearchIOError(OSError):
    def __init__(self, message: str, stats: SearchStats) -> None:
        super().__init__(message)
        self.stats = stats


def _read_hop(handle: IndexHandle, ids: list[int], pool: cf.Executor | None):
    if pool is None or len(ids) == 1:
        return [handle.read_raw(i) for i in ids]
    # completion order is irrelevant: results come back in submission (id) order
    return list(pool.map(handle.read_raw, ids))


def beam_search(handle: IndexHandle, query, params: SearchParams, *,
                io_pool: cf.Executor | None = None) -> SearchOutcome:
    meta = handle.meta
    mode = params.mode if params.mode is not None else handle.pq_source
    if mode is Mode.DISKANN and handle.pq_codes is None:
        raise ValueError("in-memory PQ search needs a handle opened with the sidecar code array")
    if mode is Mode.AISAQ and meta.mode is not Mode.AISAQ:
        raise ValueError("index has no inline PQ codes")
    q = np.asarray(query)
    if q.ndim != 1 or q.shape[0] != meta.d:
        raise ValueError(f"query dimensionality {q.shape} does not match index d={meta.d}")

    t0 = time.perf_counter()
    stats = SearchStats(io_path=handle.io_path, mode=mode.name.lower())
    meter = ResidencyMeter()
    R = meta.R
    m = meta.m
    ram_codes = handle.pq_codes if mode is Mode.DISKANN else None
    if ram_codes is not None:
        meter.hold(meta.n)
    meter.hold(meta.n_ep)

    table = build_distance_table(q, handle.codebook)
    qf = q.astype(np.float64)
    metric = meta.metric

    eps = [int(e) for e in meta.entrypoints]
    ep_keys = pq_distances(meta.entry_codes, table).tolist()
    stats.pq_distance_computations += len(eps)
    seen = set()
    pool: list[tuple[float, int]] = []
    for key, e in zip(ep_keys, eps):
        if e not in seen:
            seen.add(e)
            pool.append((key, e))
    pool.sort()
    pool = pool[: params.L]
    expanded: set[int] = set()
    order: list[int] = []
    v_ids: list[int] = []
    v_keys: list[float] = []
    deg_at = handle._deg_at
    ids_at = handle._ids_at
    pq_at = handle._pq_at
    vec_dtype = handle._vec_dtype
    d = meta.d

    while True:
        frontier = []
        for _, nid in pool:
            if nid not in expanded:
                frontier.append(nid)
                if len(frontier) == params.w:
                    break
        if not frontier:
            break
        frontier.sort()
        stats.hops += 1
        try:
            reads = _read_hop(handle, frontier, io_pool)
        except OSError as exc:
            stats.wall_seconds = time.perf_counter() - t0
            raise SearchIOError(f"chunk read failed during hop {stats.hops}: {exc}", stats) from exc
        held = R * len(frontier) if ram_codes is None else 0
        meter.hold(held)
        vecs = np.empty((len(frontier), d), dtype=vec_dtype)
        fresh_ids: list[int] = []
        fresh_codes = []
        for slot, (nid, (buf, at)) in enumerate(zip(frontier, reads)):
            stats.io_requests += 1
            stats.bytes_read += len(buf)
            expanded.add(nid)
            order.append(nid)
            vecs[slot] = np.frombuffer(buf, dtype=vec_dtype, count=d, offset=at)
            deg = int.from_bytes(buf[at + deg_at : at + deg_at + 4], "little")
            if deg > R:
                raise ValueError(f"node {nid}: corrupt degree {deg} > R={R}")
            nbrs = np.frombuffer(buf, dtype="<u4", count=deg, offset=at + ids_at).tolist()
            keep = [j for j, v in enumerate(nbrs) if v not in seen]
            if not keep:
                continue
            new = [nbrs[j] for j in keep]
            seen.update(new)
            fresh_ids.extend(new)
            if ram_codes is None:
                inline = np.frombuffer(buf, dtype=np.uint8, count=deg * m, offset=at + pq_at).reshape(deg, m)
                fresh_codes.append(inline[keep])
            else:
                fresh_codes.append(ram_codes[new])
        v_ids.extend(frontier)
        v_keys.extend(distances_to(vecs, qf, metric).tolist())
        if fresh_ids:
            keys = pq_distances(np.concatenate(fresh_codes), table).tolist()
            stats.pq_distance_computations += len(keys)
            pool.extend(zip(keys, fresh_ids))
            pool.sort()
            del pool[params.L :]
        # chunk buffers (and their inline codes) are dropped after scoring
        meter.release(held)
        del reads

    ranked = sorted(zip(v_keys, v_ids))
    top = ranked[: params.k]
    stats.peak_resident_pq_codes = meter.peak
    stats.working_set_bytes = meter.peak * m + handle.codebook.nbytes
    stats.wall_seconds = time.perf_counter() - t0
    return SearchOutcome(
        ids=[i for _, i in top],
        distances=[k for k, _ in top],
        stats=stats,
        incomplete=len(ranked) < params.k,
        expanded=order,
    )


# ---------------------------------------------------------------------------
# batches


@dataclass
class BatchResult:
    outcomes: list[SearchOutcome | None]
    errors: dict[int, str]
    wall_seconds: float
    concurrency: int
    io_path: str
    mode: str
    recall_at_1: float | None = None
    recall_at_k: float | None = None

    @property
    def latencies_ms(self) -> np.ndarray:
        return np.array([o.stats.wall_seconds * 1e3 for o in self.outcomes if o is not None])

    def summary(self) -> dict:
        lat = self.latencies_ms
        ok = [o for o in self.outcomes if o is not None]
        mean = lambda xs: float(np.mean(xs)) if len(xs) else float("nan")  # noqa: E731
        return {
            "queries": len(self.outcomes),
            "failed": len(self.errors),
            "mode": self.mode,
            "io_path": self.io_path,
            "concurrency": self.concurrency,
            "recall_at_1": self.recall_at_1,
            "recall_at_k": self.recall_at_k,
            "mean_latency_ms": mean(lat),
            "p50_latency_ms": float(np.percentile(lat, 50)) if len(lat) else float("nan"),
            "p95_latency_ms": float(np.percentile(lat, 95)) if len(lat) else float("nan"),
            "p99_latency_ms": float(np.percentile(lat, 99)) if len(lat) else float("nan"),
            "qps": len(ok) / self.wall_seconds if self.wall_seconds > 0 else float("nan"),
            "mean_hops": mean([o.stats.hops for o in ok]),
            "mean_io_requests": mean([o.stats.io_requests for o in ok]),
            "mean_bytes_read": mean([o.stats.bytes_read for o in ok]),
            "peak_resident_pq_codes": max((o.stats.peak_resident_pq_codes for o in ok), default=0),
            "working_set_bytes": max((o.stats.working_set_bytes for o in ok), default=0),
        }


def batch_search(handle: IndexHandle, queries, params: SearchParams, concurrency: int = 1,
                 groundtruth=None) -> BatchResult:
    """Run every query; results are identical for any ``concurrency``.

    Per-query failures are recorded in ``errors`` and leave a ``None`` outcome.
    With ``groundtruth`` (nq x >=k ids) mean recall@1 and recall@k are filled in.
    """
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    queries = np.asarray(queries)
    outcomes: list[SearchOutcome | None] = [None] * len(queries)
    errors: dict[int, str] = {}
    lock = threading.Lock()

    def run(i: int) -> None:
        try:
            outcomes[i] = beam_search(handle, queries[i], params)
        except Exception as exc:  # recorded per query, not fatal to the batch
            with lock:
                errors[i] = f"{type(exc).__name__}: {exc}"

    t0 = time.perf_counter()
    if concurrency == 1:
        for i in range(len(queries)):
            run(i)
    else:
        with cf.ThreadPoolExecutor(max_workers=concurrency) as ex:
            list(ex.map(run, range(len(queries))))
    wall = time.perf_counter() - t0
    mode = (params.mode if params.mode is not None else handle.pq_source).name.lower()
    result = BatchResult(outcomes, errors, wall, concurrency, handle.io_path, mode)
    if groundtruth is not None:
        gt = np.asarray(groundtruth)
        r1, rk = [], []
        for i, o in enumerate(outcomes):
            if o is None:
                continue
            r1.append(recall_at_k(o.ids, gt[i], 1) if len(o.ids) >= 1 else 0.0)
            rk.append(recall_at_k(o.ids, gt[i], params.k) if len(o.ids) >= params.k else
                      len(set(o.ids) & set(gt[i][: params.k].tolist())) / params.k)
        result.recall_at_1 = float(np.mean(r1)) if r1 else None
        result.recall_at_k = float(np.mean(rk)) if rk else None
    return result


# ---------------------------------------------------------------------------
# cross-mode identity


@dataclass
class Divergence:
    query: int
    field: str
    a: object
    b: object


@dataclass
class IdentityReport:
    queries: int
    divergences: list[Divergence]
    io_requests_a: list[int]
    io_requests_b: list[int]
    bytes_read_a: list[int]
    bytes_read_b: list[int]

    @property
    def identical(self) -> bool:
        return not self.divergences


def search_identity_check(handle_a: IndexHandle, handle_b: IndexHandle, queries,
                          params: SearchParams) -> IdentityReport:
    """Compare per-query traces of two indices built from the same graph and codes.

    Returned ids, hop counts and I/O request counts must match exactly.
    """
    if handle_a.codebook_hash != handle_b.codebook_hash:
        raise ValueError("indices do not share a codebook (content hashes differ)")
    if (handle_a.meta.n, handle_a.meta.d, handle_a.meta.R) != (handle_b.meta.n, handle_b.meta.d, handle_b.meta.R):
        raise ValueError("indices differ in N, d or R")
    if not np.array_equal(handle_a.meta.entrypoints, handle_b.meta.entrypoints):
        raise ValueError("indices have different entrypoints")
    divs: list[Divergence] = []
    io_a, io_b, br_a, br_b = [], [], [], []
    for qi, q in enumerate(np.asarray(queries)):
        oa = beam_search(handle_a, q, params)
        ob = beam_search(handle_b, q, params)
        io_a.append(oa.stats.io_requests)
        io_b.append(ob.stats.io_requests)
        br_a.append(oa.stats.bytes_read)
        br_b.append(ob.stats.bytes_read)
        for name, va, vb in (
            ("ids", oa.ids, ob.ids),
            ("hops", oa.stats.hops, ob.stats.hops),
            ("io_requests", oa.stats.io_requests, ob.stats.io_requests),
        ):
            if va != vb:
                divs.append(Divergence(qi, name, va, vb))
    return IdentityReport(len(io_a), divs, io_a, io_b, br_a, br_b)


def outcome_row(query_id: int, outcome: SearchOutcome, k: int) -> dict:
    """Flat CSV row: query id, k ids, k distances, then the stats columns."""
    row: dict = {"query": query_id}
    for j in range(k):
        row[f"id{j}"] = outcome.ids[j] if j < len(outcome.ids) else -1
    for j in range(k):
        row[f"dist{j}"] = repr(outcome.distances[j]) if j < len(outcome.distances) else ""
    st = asdict(outcome.stats)
    st.pop("wall_seconds")
    row.update(st)
    row["incomplete"] = int(outcome.incomplete)
    return row
