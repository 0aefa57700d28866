"""Command-line driver: gen, build, search, sweep, switch-bench, inspect, cost."""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import bench
from .core import Dataset, Metric
from .graph import BuildParams, build_vamana
from .layout import (
    B_NUM, ChunkGeometry, CorruptIndexError, Mode, open_index, serialize_index, validate_degree,
)
from .pq import PQCodebook, encode, train_pq
from .search import SearchParams, batch_search, outcome_row
from .vecs import format_of, read_vecs

log = logging.getLogger("aisaq")


def _load_vectors(path: str, fmt: str | None) -> np.ndarray:
    fmt = fmt or format_of(path)
    if fmt not in ("fvecs", "bvecs"):
        raise SystemExit(f"{path}: dataset format must be fvecs or bvecs")
    return read_vecs(path, fmt)


def _diskann_path(out: str) -> str:
    root, ext = os.path.splitext(out)
    return f"{root}.diskann{ext or '.idx'}"


def cmd_gen(args) -> int:
    paths = bench.gen_synthetic(args.out, args.n, args.d, args.clusters, args.seed, args.format,
                                nq=args.nq, k=args.k, metric=args.metric)
    for key, path in paths.items():
        print(f"{key}={path}")
    return 0


def cmd_build(args) -> int:
    data = _load_vectors(args.data, args.format)
    ds = Dataset(data, Metric.parse(args.metric))
    external = None
    if args.shared_codebook and os.path.exists(args.shared_codebook):
        codebook = PQCodebook.load(args.shared_codebook)
        if codebook.d != ds.d:
            raise SystemExit(f"shared codebook has d={codebook.d}, dataset has d={ds.d}")
        external = args.shared_codebook
        print(f"codebook=loaded:{args.shared_codebook}")
    else:
        codebook = train_pq(ds, args.m, iterations=args.pq_iters, seed=args.seed, max_train=args.pq_train)
        if args.shared_codebook:
            codebook.save(args.shared_codebook)
            external = args.shared_codebook
            print(f"codebook=trained,saved:{args.shared_codebook}")
        else:
            print("codebook=trained,inline")
    codes = encode(ds.vectors, codebook)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    params = BuildParams(R=args.R, L_build=args.L_build, alpha=args.alpha, seed=args.seed, n_ep=args.n_ep)
    graph = build_vamana(ds, params)
    modes = [Mode.AISAQ, Mode.DISKANN] if args.mode == "both" else [Mode.parse(args.mode)]
    for mode in modes:
        out = args.out if (mode is Mode.AISAQ or args.mode != "both") else _diskann_path(args.out)
        check = serialize_index(out, graph, ds, codebook, codes, mode, block_size=args.block_size,
                                external_codebook=external,
                                write_sidecar=True if mode is Mode.DISKANN else args.sidecar)
        geo = ChunkGeometry(ds.d * ds.kind.itemsize, args.R, codebook.m, mode, args.block_size)
        print(f"index={out}")
        print(f"  mode={mode.name.lower()} N={ds.n} d={ds.d} R={args.R} m={codebook.m} n_ep={args.n_ep}")
        print(f"  chunk_size={geo.chunk_size} blocks_per_chunk={geo.blocks_per_chunk} "
              f"chunks_per_block={geo.chunks_per_block} read_length={geo.read_length}")
        status = "ok" if check.ok else f"warning (suggested R={check.suggested_R})"
        print(f"  degree_check={status}: {check.message}")
    return 0


def _search_rows(args, index_path, pq_source, queries, gt, results_base=None) -> list[dict]:
    handle = open_index(index_path, io_path=args.io_path, pq_source=pq_source)
    try:
        rows = []
        for L in args.L:
            params = SearchParams(k=args.k, L=max(L, args.k), w=args.w)
            res = batch_search(handle, queries, params, args.concurrency, gt)
            for qi, msg in sorted(res.errors.items()):
                print(f"query {qi} failed: {msg}", file=sys.stderr)
            if results_base:
                path = results_base if len(args.L) == 1 else f"{os.path.splitext(results_base)[0]}_L{L}.csv"
                per_query = [outcome_row(i, o, args.k) for i, o in enumerate(res.outcomes) if o is not None]
                bench.write_csv(path, per_query)
            rows.append(bench.report_row(handle, res, params, dataset_name=os.path.basename(args.queries),
                                         seed=args.seed))
        return rows
    finally:
        handle.close()


def _queries_and_gt(args):
    queries = _load_vectors(args.queries, None)
    gt = read_vecs(args.gt, "ivecs") if args.gt else None
    if gt is not None and len(gt) < len(queries):
        raise SystemExit(f"groundtruth has {len(gt)} rows for {len(queries)} queries")
    return queries, gt


def cmd_search(args) -> int:
    queries, gt = _queries_and_gt(args)
    rows = _search_rows(args, args.index, args.mode, queries, gt, args.results)
    _emit(rows, args.report)
    return 0


def cmd_sweep(args) -> int:
    queries, gt = _queries_and_gt(args)
    rows = []
    for path in args.index:
        for mode in args.modes or [None]:
            rows.extend(_search_rows(args, path, mode, queries, gt))
    _emit(rows, args.report)
    return 0


def _emit(rows: list[dict], path: str | None) -> None:
    if path:
        bench.write_csv(path, rows, bench.REPORT_FIELDS)
    sys.stdout.write(bench.csv_text(rows, bench.REPORT_FIELDS))


def cmd_switch_bench(args) -> int:
    probe = _load_vectors(args.queries, None)[0] if args.queries else None
    records = bench.switch_bench(args.index, args.reps, probe, reuse_codebook=not args.no_reuse,
                                 io_path=args.io_path, pq_source=args.pq_source)
    rows = bench.record_rows(records)
    if args.out:
        bench.write_csv(args.out, rows)
    sys.stdout.write(bench.csv_text(rows))
    for key, value in bench.summarize_switches(records).items():
        print(f"# {key}={value}")
    return 0


def cmd_inspect(args) -> int:
    try:
        handle = open_index(args.index, io_path="buffered")
    except CorruptIndexError as exc:
        print(f"corrupt index: {exc}", file=sys.stderr)
        return 2
    with handle:
        meta = handle.meta
        g = handle.geometry
        b_full = g.b_full
        print(f"file={args.index} version={meta.version} size={meta.file_size}")
        print(f"mode={meta.mode.name.lower()} metric={meta.metric.name} element={meta.kind.name.lower()}")
        print(f"N={meta.n} d={meta.d} R={meta.R} m(b_pq)={meta.m} n_ep={meta.n_ep} B={meta.block_size}")
        print(f"B_DiskANN = b_full + b_num(R+1) = {b_full} + {B_NUM}*({meta.R}+1) = {b_full + B_NUM * (meta.R + 1)}")
        print(f"B_AiSAQ = b_full + b_num + R(b_num + b_pq) = {b_full} + {B_NUM} + {meta.R}*({B_NUM}+{meta.m}) = "
              f"{b_full + B_NUM + meta.R * (B_NUM + meta.m)}")
        print(f"chunk_size={meta.chunk_size} blocks_per_chunk={meta.blocks_per_chunk} "
              f"chunks_per_block={meta.chunks_per_block} read_length={g.read_length}")
        check = validate_degree(g)
        print(f"degree_check={'ok' if check.ok else 'warning'} suggested_R={check.suggested_R}: {check.message}")
        where = f"external:{meta.codebook_path}" if meta.codebook_external else f"inline@{meta.codebook_offset}"
        print(f"codebook={where} length={meta.codebook_length} sha256={meta.codebook_hash.hex()}")
        print(f"node_region={meta.node_region} metadata_bytes={meta.meta_size} sidecar={int(meta.has_sidecar)}")
        print(f"entrypoints={meta.entrypoints.tolist()}")
        print(f"entrypoint_codes={[c.tolist() for c in meta.entry_codes]}")
        for nid in args.node or []:
            loc = handle.locate(nid)
            try:
                c = handle.read_node_chunk(nid)
            except (OSError, CorruptIndexError) as exc:
                print(f"node {nid}: unreadable at bytes [{loc.offset}, {loc.offset + loc.length}): {exc}",
                      file=sys.stderr)
                return 2
            print(f"node {nid}: offset={loc.offset}+{loc.offset_in_read} read={loc.length} "
                  f"degree={c.neighbor_count}")
            print(f"  vector={np.array2string(np.asarray(c.full_vector), max_line_width=10**6, threshold=10**6)}")
            print(f"  neighbors={c.neighbor_ids.tolist()}")
            if c.inline_pq is not None:
                print(f"  inline_pq={[r.tolist() for r in c.inline_pq]}")
    return 0


def cmd_cost(args) -> int:
    inp = bench.CostModelInput(args.N, args.b_pq, args.R, args.b_full, args.servers, args.c_dram, args.c_ssd,
                               ssd_per_server=args.ssd_per_server)
    est = bench.estimate_cost(inp)
    sys.stdout.write(bench.csv_text(bench.cost_rows(est)))
    print(f"# diskann_dram_gb_per_server={est.dram_gb_per_server_diskann:g}")
    print(f"# at_{inp.n_servers}_servers diskann_usd={est.diskann.usd:.2f} aisaq_usd={est.aisaq.usd:.2f}")
    print(f"# crossover_servers={est.crossover_servers}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aisaq", description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--block-size", type=int, default=4096)
    p.add_argument("--io-path", choices=["auto", "direct", "buffered"], default="auto")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen", help="write a synthetic Gaussian-mixture dataset with ground truth")
    s.add_argument("--n", type=int, default=10_000)
    s.add_argument("--d", type=int, default=16)
    s.add_argument("--clusters", type=int, default=10)
    s.add_argument("--nq", type=int, default=100)
    s.add_argument("--k", type=int, default=100)
    s.add_argument("--format", choices=["fvecs", "bvecs"], default="fvecs")
    s.add_argument("--metric", default="l2")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("build", help="train/load PQ, build the graph and write the index")
    s.add_argument("--data", required=True)
    s.add_argument("--format", choices=["fvecs", "bvecs"])
    s.add_argument("--metric", default="l2")
    s.add_argument("--R", type=int, default=32)
    s.add_argument("--L-build", dest="L_build", type=int, default=64)
    s.add_argument("--alpha", type=float, default=1.2)
    s.add_argument("--m", type=int, default=8)
    s.add_argument("--n-ep", dest="n_ep", type=int, default=1)
    s.add_argument("--pq-iters", type=int, default=12)
    s.add_argument("--pq-train", type=int, default=None, help="cap on PQ training rows")
    s.add_argument("--mode", choices=["aisaq", "diskann", "both"], default="aisaq")
    s.add_argument("--sidecar", action="store_true", help="also write the .pq array for an AiSAQ index")
    s.add_argument("--shared-codebook", help="codebook file to load (or to create) and reference by hash")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build)

    def search_args(s, multi_index: bool):
        s.add_argument("--index", required=True, nargs="+" if multi_index else None)
        s.add_argument("--queries", required=True)
        s.add_argument("--gt")
        s.add_argument("--k", type=int, default=1)
        s.add_argument("--L", type=int, nargs="+", default=[64])
        s.add_argument("--w", type=int, default=4)
        s.add_argument("--concurrency", type=int, default=1)
        s.add_argument("--report", help="write the report rows to this CSV as well as stdout")

    s = sub.add_parser("search", help="batch search with recall/latency report")
    search_args(s, False)
    s.add_argument("--mode", choices=["aisaq", "diskann"], help="PQ source (default: the file's mode)")
    s.add_argument("--results", help="per-query result CSV")
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("sweep", help="L sweep over several indices and PQ sources")
    search_args(s, True)
    s.add_argument("--modes", nargs="+", choices=["aisaq", "diskann"],
                   help="PQ sources to try per index (default: each file's own mode)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("switch-bench", help="round-robin index switching")
    s.add_argument("--index", nargs="+", required=True)
    s.add_argument("--reps", type=int, default=3)
    s.add_argument("--queries", help="vectors file; its first row is the probe query")
    s.add_argument("--no-reuse", action="store_true", help="always reload PQ centroids")
    s.add_argument("--pq-source", choices=["aisaq", "diskann"])
    s.add_argument("--out")
    s.set_defaults(func=cmd_switch_bench)

    s = sub.add_parser("inspect", help="dump metadata and node chunks")
    s.add_argument("--index", required=True)
    s.add_argument("--node", type=int, nargs="*")
    s.set_defaults(func=cmd_inspect)

    s = sub.add_parser("cost", help="DRAM/SSD cost model for n search servers")
    s.add_argument("--N", type=int, default=1_000_000_000)
    s.add_argument("--b-pq", dest="b_pq", type=int, default=32)
    s.add_argument("--R", type=int, default=52)
    s.add_argument("--b-full", dest="b_full", type=int, default=128)
    s.add_argument("--servers", type=int, default=1)
    s.add_argument("--c-dram", type=float, default=1.8)
    s.add_argument("--c-ssd", type=float, default=0.054)
    s.add_argument("--ssd-per-server", action="store_true",
                   help="charge every server its own SSD copy of the index")
    s.set_defaults(func=cmd_cost)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, CorruptIndexError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
