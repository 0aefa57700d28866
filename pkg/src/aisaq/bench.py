"""Benchmark harness: synthetic data, sweeps, switch timing, CSV reports and the cost model."""

from __future__ import annotations

import csv
import io
import os
import statistics
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Dataset, groundtruth
from .layout import IndexHandle, Mode, chunk_size, ChunkGeometry, open_index, switch_index
from .search import SearchParams, batch_search, beam_search
from .vecs import write_vecs

GB = 1e9


# ---------------------------------------------------------------------------
# synthetic data


def gaussian_mixture(n: int, d: int, clusters: int, seed: int, spread: float = 5.0,
                     kind: str = "float32") -> np.ndarray:
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=spread, size=(clusters, d))
    x = centers[rng.integers(0, clusters, n)] + rng.normal(size=(n, d))
    if kind == "uint8":
        lo, hi = x.min(), x.max()
        return np.clip(np.rint((x - lo) / (hi - lo) * 255.0), 0, 255).astype(np.uint8)
    return x.astype(np.float32)


def gen_synthetic(out_dir, n: int, d: int, clusters: int, seed: int, fmt: str = "fvecs",
                  nq: int = 100, k: int = 100, metric: str = "l2") -> dict[str, str]:
    """Write base/query vectors and brute-force ground truth; returns the file paths.

    Queries are extra draws from the same mixture, never copies of base points.
    """
    if fmt not in ("fvecs", "bvecs"):
        raise ValueError("format must be fvecs or bvecs")
    kind = "uint8" if fmt == "bvecs" else "float32"
    both = gaussian_mixture(n + nq, d, clusters, seed, kind=kind)
    base, queries = both[:n], both[n:]
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "base": os.path.join(out_dir, f"base.{fmt}"),
        "query": os.path.join(out_dir, f"query.{fmt}"),
        "groundtruth": os.path.join(out_dir, "groundtruth.ivecs"),
    }
    write_vecs(paths["base"], base)
    write_vecs(paths["query"], queries)
    gt = groundtruth(Dataset(base, metric), queries, min(k, n))
    write_vecs(paths["groundtruth"], gt.astype(np.int32))
    return paths


# ---------------------------------------------------------------------------
# reports

REPORT_FIELDS = [
    "dataset", "index", "mode", "io_path", "b_pq", "R", "N", "d", "k", "L", "w", "concurrency", "seed",
    "queries", "recall_at_1", "recall_at_k", "mean_latency_ms", "p95_latency_ms", "qps",
    "io_requests_per_query", "bytes_read_per_query", "mean_hops", "peak_resident_pq_codes",
    "working_set_bytes", "bytes_loaded_at_open", "open_ms",
]


def write_csv(path_or_file, rows: list[dict], fields: list[str] | None = None) -> None:
    fields = fields or (list(rows[0].keys()) if rows else [])
    own = isinstance(path_or_file, (str, os.PathLike))
    f = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    finally:
        if own:
            f.close()


def csv_text(rows: list[dict], fields: list[str] | None = None) -> str:
    buf = io.StringIO()
    write_csv(buf, rows, fields)
    return buf.getvalue()


def report_row(handle: IndexHandle, result, params: SearchParams, *, dataset_name: str = "",
               seed: int = 0) -> dict:
    """One BenchReport row: full search config plus aggregate measurements."""
    s = result.summary()
    meta = handle.meta
    return {
        "dataset": dataset_name, "index": handle.path, "mode": s["mode"], "io_path": s["io_path"],
        "b_pq": meta.m, "R": meta.R, "N": meta.n, "d": meta.d, "k": params.k, "L": params.L, "w": params.w,
        "concurrency": s["concurrency"], "seed": seed, "queries": s["queries"],
        "recall_at_1": s["recall_at_1"], "recall_at_k": s["recall_at_k"],
        "mean_latency_ms": s["mean_latency_ms"], "p95_latency_ms": s["p95_latency_ms"], "qps": s["qps"],
        "io_requests_per_query": s["mean_io_requests"], "bytes_read_per_query": s["mean_bytes_read"],
        "mean_hops": s["mean_hops"], "peak_resident_pq_codes": s["peak_resident_pq_codes"],
        "working_set_bytes": s["working_set_bytes"], "bytes_loaded_at_open": handle.bytes_loaded,
        "open_ms": handle.load_seconds * 1e3,
    }


def sweep(handle: IndexHandle, queries, Ls, *, k: int = 1, w: int = 4, gt=None, concurrency: int = 1,
          mode=None, dataset_name: str = "", seed: int = 0) -> list[dict]:
    """One report row per candidate-list size L."""
    rows = []
    for L in Ls:
        params = SearchParams(k=k, L=max(L, k), w=w, mode=mode)
        res = batch_search(handle, queries, params, concurrency, gt)
        rows.append(report_row(handle, res, params, dataset_name=dataset_name, seed=seed))
    return rows


# ---------------------------------------------------------------------------
# index switching


@dataclass
class SwitchRecord:
    rep: int
    index: str
    bytes_loaded: int
    switch_ms: float
    fast_path: bool
    probe_ok: bool
    error: str = ""


def switch_bench(paths, repetitions: int = 3, probe=None, *, reuse_codebook: bool = True,
                 io_path: str = "auto", pq_source=None, probe_params: SearchParams | None = None
                 ) -> list[SwitchRecord]:
    """Round-robin switching over ``paths`` with one probe query after each switch.

    The first index is opened up front and not timed; every later open is a
    switch. With ``reuse_codebook=False`` each switch reloads the codebook.
    Failures (for example a probe whose dimensionality does not match) are
    recorded, not raised.
    """
    paths = [os.fspath(p) for p in paths]
    if len(paths) < 2:
        raise ValueError("switch benchmark needs at least two indices")
    params = probe_params or SearchParams(k=1, L=16, w=4)
    handle = open_index(paths[0], io_path=io_path, pq_source=pq_source)
    records = []
    order = paths[1:] + paths[:1]
    try:
        for rep in range(repetitions):
            for p in order:
                try:
                    handle = switch_index(handle, p, io_path=io_path, pq_source=pq_source,
                                          reuse_codebook=reuse_codebook)
                except Exception as exc:
                    records.append(SwitchRecord(rep, p, 0, float("nan"), False, False, f"{type(exc).__name__}: {exc}"))
                    handle = open_index(p, io_path=io_path, pq_source=pq_source)
                    continue
                ok, err = True, ""
                q = probe if probe is not None else np.zeros(handle.meta.d, dtype=handle.meta.kind.dtype)
                try:
                    out = beam_search(handle, np.asarray(q), params)
                    ok = len(out.ids) >= 1
                except Exception as exc:
                    ok, err = False, f"{type(exc).__name__}: {exc}"
                records.append(SwitchRecord(rep, p, handle.bytes_loaded, handle.load_seconds * 1e3,
                                            handle.codebook_reused, ok, err))
    finally:
        handle.close()
    return records


def summarize_switches(records: list[SwitchRecord]) -> dict:
    ok = [r for r in records if not r.error]
    return {
        "switches": len(records),
        "fast_path_hits": sum(r.fast_path for r in records),
        "bytes_loaded_min": min((r.bytes_loaded for r in ok), default=0),
        "bytes_loaded_max": max((r.bytes_loaded for r in ok), default=0),
        "median_switch_ms": statistics.median([r.switch_ms for r in ok]) if ok else float("nan"),
        "probes_ok": sum(r.probe_ok for r in records),
    }


# ---------------------------------------------------------------------------
# cost model


@dataclass(frozen=True)
class CostModelInput:
    n_vectors: int
    b_pq: int
    R: int
    b_full: int = 128
    n_servers: int = 1
    c_dram: float = 1.8   # USD per GB
    c_ssd: float = 0.054  # USD per GB
    b_num: int = 4
    ssd_per_server: bool = False  # each server keeps its own copy of the index on SSD

    def __post_init__(self) -> None:
        for name in ("n_vectors", "b_pq", "R", "b_full", "n_servers", "b_num"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.c_dram <= 0 or self.c_ssd <= 0:
            raise ValueError("prices must be positive")


@dataclass(frozen=True)
class SystemCost:
    dram_gb: float
    ssd_gb: float
    usd: float


@dataclass(frozen=True)
class CostEstimate:
    n_servers: int
    diskann: SystemCost
    aisaq: SystemCost
    dram_gb_per_server_diskann: float
    crossover_servers: int | None
    table: list[dict] = field(default_factory=list)


def _system_costs(inp: CostModelInput, n: int) -> tuple[SystemCost, SystemCost]:
    N = inp.n_vectors
    base = N * chunk_size(ChunkGeometry(inp.b_full, inp.R, inp.b_pq, Mode.DISKANN, b_num=inp.b_num))
    inline = inp.R * N * inp.b_pq
    copies = n if inp.ssd_per_server else 1
    d_dram = n * N * inp.b_pq / GB
    d_ssd = copies * base / GB
    a_ssd = copies * (base + inline) / GB
    diskann = SystemCost(d_dram, d_ssd, d_dram * inp.c_dram + d_ssd * inp.c_ssd)
    aisaq = SystemCost(0.0, a_ssd, a_ssd * inp.c_ssd)
    return diskann, aisaq


def estimate_cost(inp: CostModelInput, max_servers: int = 1_000_000) -> CostEstimate:
    """DRAM/SSD footprint and price of both systems at ``inp.n_servers`` servers.

    DiskANN keeps N*b_pq bytes of codes in every server's DRAM; AiSAQ keeps
    R*N*b_pq extra bytes inside the SSD index instead. Both pay for the same
    base index (vectors and adjacency). The crossover is the smallest server
    count at which AiSAQ is strictly cheaper, or None within ``max_servers``.
    """
    diskann, aisaq = _system_costs(inp, inp.n_servers)
    crossover = None
    # DiskANN grows linearly in n; AiSAQ is flat unless SSD is per server
    lo, hi = 1, max_servers
    d_hi, a_hi = _system_costs(inp, hi)
    if a_hi.usd < d_hi.usd:
        while lo < hi:
            mid = (lo + hi) // 2
            dm, am = _system_costs(inp, mid)
            if am.usd < dm.usd:
                hi = mid
            else:
                lo = mid + 1
        crossover = lo
    table = []
    for n in range(1, max(inp.n_servers, (crossover or 1) + 2, 8) + 1):
        dn, an = _system_costs(inp, n)
        table.append({"servers": n, "diskann_dram_gb": dn.dram_gb, "diskann_ssd_gb": dn.ssd_gb,
                      "diskann_usd": dn.usd, "aisaq_dram_gb": an.dram_gb, "aisaq_ssd_gb": an.ssd_gb,
                      "aisaq_usd": an.usd})
    return CostEstimate(inp.n_servers, diskann, aisaq, inp.n_vectors * inp.b_pq / GB, crossover, table)


def cost_rows(est: CostEstimate) -> list[dict]:
    return [dict(r) for r in est.table]


def record_rows(records: list[SwitchRecord]) -> list[dict]:
    return [asdict(r) for r in records]
