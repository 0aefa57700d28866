import concurrent.futures as cf
import os
import shutil

import numpy as np
import pytest

from aisaq.core import Dataset, brute_force_knn, distances_to, recall_at_k
from aisaq.graph import VamanaGraph
from aisaq.layout import Mode, open_index, serialize_index
from aisaq.pq import train_pq
from aisaq.search import (
    SearchIOError, SearchParams, batch_search, beam_search, outcome_row, search_identity_check,
)

from conftest import make_built


def test_params_validation():
    with pytest.raises(ValueError):
        SearchParams(k=10, L=5)
    with pytest.raises(ValueError):
        SearchParams(k=0)
    with pytest.raises(ValueError):
        SearchParams(w=0)
    assert SearchParams(mode="diskann").mode is Mode.DISKANN


def test_single_node(tmp_path):
    ds = Dataset(np.array([[1.0, 2.0, 3.0, 4.0]], dtype=np.float32))
    cb = train_pq(ds, 2)
    p = tmp_path / "one.idx"
    serialize_index(p, VamanaGraph.from_lists([[]], R=4), ds, cb)
    with open_index(p) as h:
        out = beam_search(h, np.zeros(4, dtype=np.float32), SearchParams(k=1, L=1, w=1))
    assert out.ids == [0] and out.distances == [30.0]
    assert (out.stats.hops, out.stats.io_requests) == (1, 1)


def test_incomplete_flag(tmp_path):
    ds = Dataset(np.eye(3, dtype=np.float32))
    cb = train_pq(ds, 1)
    p = tmp_path / "three.idx"
    serialize_index(p, VamanaGraph.from_lists([[1, 2], [0], [0]], R=2), ds, cb)
    with open_index(p) as h:
        out = beam_search(h, np.zeros(3, dtype=np.float32), SearchParams(k=5, L=5))
    assert out.incomplete and sorted(out.ids) == [0, 1, 2]


def test_query_dimension_checked(small):
    with open_index(small.aisaq) as h:
        with pytest.raises(ValueError, match="dimensionality"):
            beam_search(h, np.zeros(7, dtype=np.float32), SearchParams())


def test_mode_requirements(small):
    with open_index(small.diskann) as h:
        with pytest.raises(ValueError, match="inline"):
            beam_search(h, small.queries[0], SearchParams(mode="aisaq"))
    with open_index(small.aisaq) as h:
        assert h.pq_codes is None
        with pytest.raises(ValueError, match="sidecar"):
            beam_search(h, small.queries[0], SearchParams(mode="diskann"))


def test_outcome_invariants(small):
    params = SearchParams(k=10, L=32, w=4)
    with open_index(small.aisaq) as h:
        for q in small.queries[:40]:
            out = beam_search(h, q, params)
            st = out.stats
            assert st.io_requests == len(out.expanded) == len(set(out.expanded))
            assert st.bytes_read == 4096 * st.io_requests
            assert set(out.ids) <= set(out.expanded)
            exact = distances_to(small.dataset.vectors, q)
            assert out.distances == exact[out.ids].tolist()
            pairs = list(zip(out.distances, out.ids))
            assert pairs == sorted(pairs)
            # re-ranking: no expanded node beats the k-th result
            kth = pairs[-1]
            for i in out.expanded:
                if i not in out.ids:
                    assert (exact[i], i) > kth
            assert st.hops <= st.io_requests <= st.hops * params.w
            assert st.pq_distance_computations >= st.io_requests - 1


def test_results_match_reference_trace(small):
    # plain-Python rendering of the candidate-pool loop with the file's codes
    from aisaq.pq import build_distance_table
    g = small.graph
    params = SearchParams(k=5, L=20, w=3)
    with open_index(small.aisaq) as h:
        for q in small.queries[:15]:
            table = build_distance_table(q, small.codebook)
            pq = lambda i: float(table[np.arange(small.codebook.m), small.codes[i]].sum())  # noqa: E731
            ep = int(g.entrypoints[0])
            pool, seen, done, order, hops = [(pq(ep), ep)], {ep}, set(), [], 0
            while True:
                front = sorted([i for _, i in pool if i not in done][: params.w])
                if not front:
                    break
                hops += 1
                for v in front:
                    done.add(v)
                    order.append(v)
                    for nb in g.neighbors(v).tolist():
                        if nb not in seen:
                            seen.add(nb)
                            pool.append((pq(nb), nb))
                pool = sorted(pool)[: params.L]
            exact = distances_to(small.dataset.vectors, q)
            ranked = sorted((exact[i], i) for i in order)[: params.k]
            out = beam_search(h, q, params)
            assert out.expanded == order and out.stats.hops == hops
            assert out.ids == [i for _, i in ranked]


def test_residency_bound_multi_entrypoint(tmp_path):
    x = np.random.default_rng(0).normal(size=(800, 8)).astype(np.float32)
    b = make_built(tmp_path, x, x[:50] + 0.1, R=12, L_build=24, m=4, n_ep=3)
    with open_index(b.aisaq) as h:
        assert h.meta.n_ep == 3
        for w in (1, 2, 4):
            res = batch_search(h, b.queries, SearchParams(k=5, L=24, w=w))
            peaks = [o.stats.peak_resident_pq_codes for o in res.outcomes]
            assert max(peaks) <= w * 12 + 3
            assert all(o.stats.working_set_bytes == p * 4 + h.codebook.nbytes
                       for o, p in zip(res.outcomes, peaks))
    with open_index(b.diskann) as h:
        out = beam_search(h, b.queries[0], SearchParams(k=5, L=24))
        assert out.stats.peak_resident_pq_codes == 800 + 3


def test_concurrency_deterministic(small):
    params = SearchParams(k=10, L=32, w=4)
    with open_index(small.aisaq) as h:
        one = batch_search(h, small.queries, params, concurrency=1)
        many = batch_search(h, small.queries, params, concurrency=8)
        with cf.ThreadPoolExecutor(4) as pool:
            pooled = [beam_search(h, q, params, io_pool=pool) for q in small.queries]
    assert [o.ids for o in one.outcomes] == [o.ids for o in many.outcomes] == [o.ids for o in pooled]
    assert [o.stats.io_requests for o in one.outcomes] == [o.stats.io_requests for o in pooled]
    s = many.summary()
    assert s["concurrency"] == 8 and s["io_path"] in ("direct", "buffered") and s["failed"] == 0


def test_batch_recall_definition(small):
    params = SearchParams(k=10, L=40, w=4)
    with open_index(small.aisaq) as h:
        res = batch_search(h, small.queries, params, groundtruth=small.gt)
    r1 = np.mean([recall_at_k(o.ids, g, 1) for o, g in zip(res.outcomes, small.gt)])
    rk = np.mean([recall_at_k(o.ids, g, 10) for o, g in zip(res.outcomes, small.gt)])
    assert res.recall_at_1 == r1 and res.recall_at_k == rk
    assert res.recall_at_1 >= 0.95


def test_recall_monotone_in_L(small):
    recalls = []
    with open_index(small.aisaq) as h:
        for L in (10, 20, 40, 80):
            res = batch_search(h, small.queries, SearchParams(k=10, L=L, w=4), groundtruth=small.gt)
            recalls.append(res.recall_at_k)
    assert recalls == sorted(recalls)
    assert recalls[-1] > recalls[0]


def test_identity_same_file_both_modes(small):
    params = SearchParams(k=10, L=32, w=4)
    with open_index(small.aisaq) as ha, open_index(small.aisaq, pq_source="diskann") as hd:
        rep = search_identity_check(ha, hd, small.queries, params)
        assert rep.identical and rep.bytes_read_a == rep.bytes_read_b
        rows_a = [outcome_row(i, beam_search(ha, q, params), 10) for i, q in enumerate(small.queries[:20])]
        rows_d = [outcome_row(i, beam_search(hd, q, params), 10) for i, q in enumerate(small.queries[:20])]
    for a, d in zip(rows_a, rows_d):
        a.pop("mode"), d.pop("mode"), a.pop("peak_resident_pq_codes"), d.pop("peak_resident_pq_codes")
        a.pop("working_set_bytes"), d.pop("working_set_bytes")
        assert a == d


def test_identity_rejects_different_codebooks(small, tmp_path):
    other = make_built(tmp_path, small.dataset.vectors, small.queries, R=16, L_build=32, m=4, seed=9)
    with open_index(small.aisaq) as a, open_index(other.aisaq) as b:
        with pytest.raises(ValueError, match="codebook"):
            search_identity_check(a, b, small.queries[:2], SearchParams())


def test_zero_distortion_any_w_with_full_pool(grid_index):
    b = grid_index
    with open_index(b.aisaq) as h:
        for w in (1, 2, 8):
            for q in b.queries[:10]:
                out = beam_search(h, q, SearchParams(k=10, L=b.dataset.n, w=w))
                assert out.ids == [i for i, _ in brute_force_knn(b.dataset, q, 10)]


def test_io_failure_carries_partial_stats(small, tmp_path):
    p = tmp_path / "t.aisaq"
    shutil.copy(small.aisaq, p)
    h = open_index(p, io_path="buffered")
    os.truncate(p, h.meta.node_region + 4096)  # only the first block of chunks survives
    try:
        with pytest.raises(SearchIOError) as info:
            for q in small.queries:
                beam_search(h, q, SearchParams(k=10, L=32, w=4))
        assert info.value.stats.hops >= 1
        res = batch_search(h, small.queries[:20], SearchParams(k=10, L=32, w=4))
        assert res.errors and all(res.outcomes[i] is None for i in res.errors)
        assert "SearchIOError" in next(iter(res.errors.values()))
    finally:
        h.close()


def test_mips_search(tmp_path):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(1500, 12)).astype(np.float32)
    q = rng.normal(size=(50, 12)).astype(np.float32)
    b = make_built(tmp_path, x, q, R=24, L_build=48, m=6, metric="mips")
    hits = 0
    with open_index(b.aisaq) as h:
        assert h.meta.metric.name == "MIPS"
        for qq in q:
            out = beam_search(h, qq, SearchParams(k=1, L=64, w=4))
            assert out.distances[0] == distances_to(x, qq, "mips")[out.ids[0]]
            assert out.distances[0] == pytest.approx(-np.dot(x[out.ids[0]].astype(np.float64), qq), rel=1e-12)
            hits += out.ids[0] == brute_force_knn(b.dataset, qq, 1)[0][0]
    assert hits >= 40


def test_uint8_search(tmp_path):
    rng = np.random.default_rng(4)
    centers = rng.integers(30, 220, size=(10, 16))
    x = np.clip(centers[rng.integers(0, 10, 1200)] + rng.normal(0, 8, (1200, 16)), 0, 255).astype(np.uint8)
    b = make_built(tmp_path, x[:1000], x[1000:], R=16, L_build=32, m=8)
    with open_index(b.aisaq) as h:
        hits = sum(beam_search(h, qq, SearchParams(k=1, L=48)).ids[0] == brute_force_knn(b.dataset, qq, 1)[0][0]
                   for qq in b.queries)
    assert hits >= 0.9 * len(b.queries)
