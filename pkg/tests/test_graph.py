import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from aisaq.core import Dataset, brute_force_knn
from aisaq.graph import (
    BuildParams, VamanaGraph, build_vamana, greedy_search_build, medoid, robust_prune, select_entrypoints,
)


def _ds(rows):
    return Dataset.from_array(rows)


def test_medoid_examples():
    assert medoid(_ds([[0, 0], [10, 0], [5, 0]])) == 2
    assert medoid(_ds([[3, 3]])) == 0
    # four symmetric corners: equal totals, lowest id wins
    assert medoid(_ds([[1, 1], [-1, 1], [-1, -1], [1, -1]])) == 0


def test_medoid_quadratic_oracle():
    x = np.random.default_rng(0).normal(size=(500, 8)).astype(np.float32)
    xd = x.astype(np.float64)
    totals = [sum(float(np.sum((xd[i] - xd[j]) ** 2)) for j in range(500)) for i in range(500)]
    assert medoid(Dataset(x)) == int(np.argmin(totals))


def test_params_validation():
    with pytest.raises(ValueError):
        BuildParams(R=0)
    with pytest.raises(ValueError):
        BuildParams(R=32, L_build=16)
    with pytest.raises(ValueError):
        BuildParams(alpha=0.9)
    with pytest.raises(ValueError):
        BuildParams(n_ep=0)


def test_greedy_fully_connected():
    rng = np.random.default_rng(1)
    ds = Dataset(rng.normal(size=(5, 3)).astype(np.float32))
    g = VamanaGraph.from_lists([[j for j in range(5) if j != i] for i in range(5)], R=4)
    for q in rng.normal(size=(10, 3)):
        _, visited = greedy_search_build(g, ds, q, L=2)
        assert brute_force_knn(ds, q, 1)[0][0] in visited


def test_greedy_path_walks_monotonically():
    ds = _ds([[float(i), 0.0] for i in range(8)])
    g = VamanaGraph.from_lists([[i + 1] if i < 7 else [] for i in range(8)], R=1)
    cands, visited = greedy_search_build(g, ds, (20.0, 0.0), L=1)
    assert visited == list(range(8))
    assert cands == [7]


def test_greedy_recall():
    rng = np.random.default_rng(2)
    ds = Dataset(rng.normal(size=(1000, 8)).astype(np.float32))
    g = build_vamana(ds, BuildParams(R=24, L_build=48, seed=0))
    qs = np.random.default_rng(3).normal(size=(100, 8))
    hits = sum(greedy_search_build(g, ds, q, 64)[0][0] == brute_force_knn(ds, q, 1)[0][0] for q in qs)
    assert hits >= 95


def test_prune_collinear_keeps_nearest():
    ds = _ds([[0, 0], [1, 0], [2, 0], [3, 0], [4, 0]])
    assert robust_prune(0, [4, 2, 1, 3], 1.0, 1, ds) == [1]
    # alpha=1 chain: 1 dominates 2, 3, 4 even with room for more
    assert robust_prune(0, [1, 2, 3, 4], 1.0, 4, ds) == [1]


def test_prune_non_dominating_keeps_all():
    ds = _ds([[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1]])
    assert robust_prune(0, [1, 2, 3, 4], 1.0, 4, ds) == [1, 2, 3, 4]


def test_prune_rejects_self():
    with pytest.raises(ValueError):
        robust_prune(0, [0, 1], 1.0, 2, _ds([[0, 0], [1, 1]]))


def _prune_oracle(x, p, cands, alpha, R):
    def d(a, b):
        return float(np.sum((x[a] - x[b]) ** 2))
    pool = sorted(set(cands), key=lambda c: (d(p, c), c))
    out = []
    while pool and len(out) < R:
        c = pool.pop(0)
        out.append(c)
        pool = [y for y in pool if not (alpha * d(c, y) <= d(p, y))]
    return out


@pytest.mark.parametrize("alpha,R", [(1.0, 8), (1.2, 8), (1.2, 32), (2.0, 5)])
def test_prune_matches_direct_rule(alpha, R):
    rng = np.random.default_rng(int(alpha * 10) + R)
    x = rng.normal(size=(200, 6)).astype(np.float32)
    ds = Dataset(x)
    xd = x.astype(np.float64)
    for node in (0, 17, 199):
        cands = [int(c) for c in rng.choice(200, 120, replace=False) if c != node]
        assert robust_prune(node, cands, alpha, R, ds) == _prune_oracle(xd, node, cands, alpha, R)


def test_build_tiny():
    g1 = build_vamana(_ds([[7, 7]]), BuildParams(R=4, L_build=4))
    assert g1.n == 1 and g1.to_lists() == [[]] and g1.entrypoint == 0
    g2 = build_vamana(_ds([[0, 0], [1, 1]]), BuildParams(R=4, L_build=4))
    assert g2.to_lists() == [[1], [0]]


def test_build_deterministic_and_reachable():
    x = np.random.default_rng(4).normal(size=(1500, 8)).astype(np.float32)
    p = BuildParams(R=12, L_build=24, alpha=1.2, seed=5)
    a = build_vamana(Dataset(x), p)
    b = build_vamana(Dataset(x), p)
    assert a == b
    a.check()
    assert a.reachable().all()
    c = build_vamana(Dataset(x), BuildParams(R=12, L_build=24, alpha=1.2, seed=6))
    assert c != a


def test_entrypoints():
    ds = Dataset(np.random.default_rng(0).normal(size=(100, 4)).astype(np.float32))
    eps = select_entrypoints(ds, 3, seed=2)
    assert eps[0] == medoid(ds) and len(set(eps.tolist())) == 3
    assert np.array_equal(eps, select_entrypoints(ds, 3, seed=2))
    g = build_vamana(ds, BuildParams(R=8, L_build=16, n_ep=3, seed=2))
    assert np.array_equal(g.entrypoints, eps)
    with pytest.raises(ValueError):
        select_entrypoints(ds, 101, 0)


def test_check_detects_violations():
    with pytest.raises(ValueError, match="self-loop"):
        VamanaGraph.from_lists([[0], []], R=2).check()
    with pytest.raises(ValueError, match="duplicate"):
        VamanaGraph.from_lists([[1, 1], []], R=2).check()
    with pytest.raises(ValueError, match="out of range"):
        VamanaGraph.from_lists([[5], []], R=2).check()
    with pytest.raises(ValueError):
        VamanaGraph.from_lists([[1, 0, 1]], R=2)


def test_reachability_repair_on_duplicates():
    # many identical points make greedy search stall; the build must still reach every node
    x = np.zeros((300, 2), dtype=np.float32)
    x[150:] = 1.0
    g = build_vamana(Dataset(x), BuildParams(R=4, L_build=8, seed=0))
    g.check()
    assert g.reachable().all()


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(2, 60), st.integers(2, 8), st.integers(0, 2**16), st.sampled_from([1.0, 1.2, 1.5]))
def test_build_invariants(n, R, seed, alpha):
    x = np.random.default_rng(seed).normal(size=(n, 3)).astype(np.float32)
    g = build_vamana(Dataset(x), BuildParams(R=R, L_build=2 * R, alpha=alpha, seed=seed))
    g.check()
    assert g.degrees.max() <= R
    assert g.reachable().all()
