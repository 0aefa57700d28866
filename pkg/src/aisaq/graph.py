"""Vamana graph construction (flat directed graph with out-degree <= R).

The build follows the DiskANN procedure: two passes over a seeded random node
order, the first with alpha = 1.0 and the second with the configured alpha.
Each node is located with an exact-distance greedy search from the medoid,
its visited set is pruned into an adjacency list, and reverse edges are added
(re-pruning a neighbour whose list overflows).

Hot loops are compiled with numba and run sequentially, so a build is a
deterministic function of (dataset, params).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .core import Dataset

MEDOID_EXACT_LIMIT = 20_000
MEDOID_SAMPLE = 10_000


@dataclass(frozen=True)
class BuildParams:
    R: int = 32
    L_build: int = 64
    alpha: float = 1.2
    seed: int = 0
    n_ep: int = 1

    def __post_init__(self) -> None:
        if self.R < 1:
            raise ValueError("R must be >= 1")
        if self.L_build < self.R:
            raise ValueError(f"L_build ({self.L_build}) must be >= R ({self.R})")
        if self.alpha < 1.0:
            raise ValueError("alpha must be >= 1.0")
        if self.n_ep < 1:
            raise ValueError("n_ep must be >= 1")


@dataclass(eq=False)
class VamanaGraph:
    """Adjacency stored as a padded (N, R) array plus per-node degrees."""

    adjacency: np.ndarray
    degrees: np.ndarray
    entrypoints: np.ndarray
    R: int = field(init=False)

    def __post_init__(self) -> None:
        self.adjacency = np.ascontiguousarray(self.adjacency, dtype=np.int64)
        self.degrees = np.ascontiguousarray(self.degrees, dtype=np.int64)
        self.entrypoints = np.ascontiguousarray(self.entrypoints, dtype=np.int64).ravel()
        self.R = self.adjacency.shape[1]

    @classmethod
    def from_lists(cls, lists, R: int, entrypoints=(0,)) -> "VamanaGraph":
        n = len(lists)
        adj = np.zeros((n, R), dtype=np.int64)
        deg = np.zeros(n, dtype=np.int64)
        for i, nb in enumerate(lists):
            nb = list(nb)
            if len(nb) > R:
                raise ValueError(f"node {i} has degree {len(nb)} > R={R}")
            adj[i, : len(nb)] = nb
            deg[i] = len(nb)
        return cls(adj, deg, np.asarray(entrypoints))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def entrypoint(self) -> int:
        return int(self.entrypoints[0])

    def neighbors(self, i: int) -> np.ndarray:
        return self.adjacency[i, : self.degrees[i]]

    def to_lists(self) -> list[list[int]]:
        return [self.neighbors(i).tolist() for i in range(self.n)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, VamanaGraph):
            return NotImplemented
        return (
            self.R == other.R
            and np.array_equal(self.entrypoints, other.entrypoints)
            and self.to_lists() == other.to_lists()
        )

    def check(self) -> None:
        """Raise if any adjacency invariant is violated."""
        if len(self.entrypoints) < 1:
            raise ValueError("graph has no entrypoint")
        if np.any(self.entrypoints < 0) or np.any(self.entrypoints >= self.n):
            raise ValueError("entrypoint id out of range")
        if np.any(self.degrees < 0) or np.any(self.degrees > self.R):
            raise ValueError("degree out of [0, R]")
        for i in range(self.n):
            nb = self.neighbors(i)
            if np.any(nb < 0) or np.any(nb >= self.n):
                raise ValueError(f"node {i}: neighbor id out of range")
            if np.any(nb == i):
                raise ValueError(f"node {i}: self-loop")
            if len(np.unique(nb)) != len(nb):
                raise ValueError(f"node {i}: duplicate neighbors")

    def reachable(self) -> np.ndarray:
        return _bfs(self.adjacency, self.degrees, self.entrypoints, np.zeros(self.n, dtype=np.bool_))


def _build_geometry(dataset: Dataset) -> np.ndarray:
    # graph geometry is Euclidean for both metrics (see README: MIPS datasets)
    return np.ascontiguousarray(dataset.vectors, dtype=np.float64)


def medoid(dataset: Dataset, seed: int = 0) -> int:
    """Point with the smallest total squared distance to all others (ties -> lowest id).

    Above ``MEDOID_EXACT_LIMIT`` points the totals are taken against a seeded
    sample of ``MEDOID_SAMPLE`` points.
    """
    if dataset.n < 1:
        raise ValueError("empty dataset")
    x = _build_geometry(dataset)
    ref = x
    if dataset.n > MEDOID_EXACT_LIMIT:
        rng = np.random.default_rng(seed)
        ref = x[np.sort(rng.choice(dataset.n, size=MEDOID_SAMPLE, replace=False))]
    # sum_j |x_i - y_j|^2 = n|x_i|^2 - 2 x_i . sum_j y_j + sum_j |y_j|^2
    norms = np.einsum("ij,ij->i", x, x)
    ref_norms = np.einsum("ij,ij->i", ref, ref)
    totals = len(ref) * norms - 2.0 * (x @ ref.sum(axis=0)) + ref_norms.sum()
    return int(np.argmin(totals))


# ---------------------------------------------------------------------------
# compiled kernels


@numba.njit(cache=True, inline="always")
def _sqdist(data, i, j):
    acc = 0.0
    for t in range(data.shape[1]):
        diff = data[i, t] - data[j, t]
        acc += diff * diff
    return acc


@numba.njit(cache=True)
def _sqdist_q(data, i, q):
    acc = 0.0
    for t in range(data.shape[1]):
        diff = data[i, t] - q[t]
        acc += diff * diff
    return acc


@numba.njit(cache=True)
def _greedy(data, adj, deg, starts, q, L, seen, touched, pool_ids, pool_d, pool_exp, visited):
    """Best-first search with a size-L pool; returns (pool size, #visited)."""
    n_touched = 0
    n_pool = 0
    for s in starts:
        if seen[s]:
            continue
        seen[s] = True
        touched[n_touched] = s
        n_touched += 1
        ds = _sqdist_q(data, s, q)
        pos = n_pool
        while pos > 0 and (pool_d[pos - 1] > ds or (pool_d[pos - 1] == ds and pool_ids[pos - 1] > s)):
            pos -= 1
        if pos >= L:
            continue
        last = min(n_pool, L - 1)
        for t in range(last, pos, -1):
            pool_ids[t] = pool_ids[t - 1]
            pool_d[t] = pool_d[t - 1]
            pool_exp[t] = pool_exp[t - 1]
        pool_ids[pos] = s
        pool_d[pos] = ds
        pool_exp[pos] = False
        n_pool = min(n_pool + 1, L)
    n_vis = 0
    while True:
        cur = -1
        for t in range(n_pool):
            if not pool_exp[t]:
                cur = t
                break
        if cur < 0:
            break
        pool_exp[cur] = True
        p = pool_ids[cur]
        visited[n_vis] = p
        n_vis += 1
        for e in range(deg[p]):
            nb = adj[p, e]
            if seen[nb]:
                continue
            seen[nb] = True
            touched[n_touched] = nb
            n_touched += 1
            dn = _sqdist_q(data, nb, q)
            if n_pool == L and (dn > pool_d[L - 1] or (dn == pool_d[L - 1] and nb > pool_ids[L - 1])):
                continue
            pos = n_pool if n_pool < L else L - 1
            while pos > 0 and (pool_d[pos - 1] > dn or (pool_d[pos - 1] == dn and pool_ids[pos - 1] > nb)):
                pos -= 1
            last = min(n_pool, L - 1)
            for t in range(last, pos, -1):
                pool_ids[t] = pool_ids[t - 1]
                pool_d[t] = pool_d[t - 1]
                pool_exp[t] = pool_exp[t - 1]
            pool_ids[pos] = nb
            pool_d[pos] = dn
            pool_exp[pos] = False
            n_pool = min(n_pool + 1, L)
    for t in range(n_touched):
        seen[touched[t]] = False
    return n_pool, n_vis


@numba.njit(cache=True)
def _prune(data, node, cands, n_cands, alpha, R, out):
    """Robust prune of cands[:n_cands] (distinct, excluding node) into out; returns count."""
    c = np.sort(cands[:n_cands])
    dn = np.empty(n_cands)
    for t in range(n_cands):
        dn[t] = _sqdist(data, node, c[t])
    order = np.argsort(dn, kind="mergesort")
    alive = np.ones(n_cands, dtype=np.bool_)
    kept = 0
    for a in range(n_cands):
        ia = order[a]
        if not alive[ia]:
            continue
        alive[ia] = False
        out[kept] = c[ia]
        kept += 1
        if kept == R:
            break
        for b in range(a + 1, n_cands):
            ib = order[b]
            if alive[ib] and alpha * _sqdist(data, c[ia], c[ib]) <= dn[ib]:
                alive[ib] = False
    return kept


@numba.njit(cache=True)
def _build_pass(data, adj, deg, order, starts, L, alpha, R, seen, touched,
                pool_ids, pool_d, pool_exp, visited, cand, pruned):
    for p in order:
        _, n_vis = _greedy(data, adj, deg, starts, data[p], L, seen, touched,
                           pool_ids, pool_d, pool_exp, visited)
        n_c = 0
        seen[p] = True
        for t in range(n_vis):
            v = visited[t]
            if not seen[v]:
                seen[v] = True
                cand[n_c] = v
                n_c += 1
        for t in range(deg[p]):
            v = adj[p, t]
            if not seen[v]:
                seen[v] = True
                cand[n_c] = v
                n_c += 1
        seen[p] = False
        for t in range(n_c):
            seen[cand[t]] = False
        k = _prune(data, p, cand, n_c, alpha, R, pruned)
        for t in range(k):
            adj[p, t] = pruned[t]
        deg[p] = k
        for t in range(k):
            j = adj[p, t]
            present = False
            for e in range(deg[j]):
                if adj[j, e] == p:
                    present = True
                    break
            if present:
                continue
            if deg[j] < R:
                adj[j, deg[j]] = p
                deg[j] += 1
            else:
                for e in range(deg[j]):
                    cand[e] = adj[j, e]
                cand[deg[j]] = p
                kj = _prune(data, j, cand, deg[j] + 1, alpha, R, pruned)
                for e in range(kj):
                    adj[j, e] = pruned[e]
                deg[j] = kj


@numba.njit(cache=True)
def _bfs(adj, deg, starts, mark):
    n = adj.shape[0]
    queue = np.empty(n, dtype=np.int64)
    head = 0
    tail = 0
    for s in starts:
        if not mark[s]:
            mark[s] = True
            queue[tail] = s
            tail += 1
    while head < tail:
        p = queue[head]
        head += 1
        for e in range(deg[p]):
            v = adj[p, e]
            if not mark[v]:
                mark[v] = True
                queue[tail] = v
                tail += 1
    return mark


class _Scratch:
    def __init__(self, n: int, L: int, R: int) -> None:
        self.seen = np.zeros(n, dtype=np.bool_)
        self.touched = np.empty(n, dtype=np.int64)
        self.pool_ids = np.empty(L, dtype=np.int64)
        self.pool_d = np.empty(L, dtype=np.float64)
        self.pool_exp = np.empty(L, dtype=np.bool_)
        self.visited = np.empty(n, dtype=np.int64)
        self.cand = np.empty(n + R + 1, dtype=np.int64)
        self.pruned = np.empty(R, dtype=np.int64)


# ---------------------------------------------------------------------------
# public operations


def greedy_search_build(graph: VamanaGraph, dataset: Dataset, query, L: int) -> tuple[list[int], list[int]]:
    """Exact-distance best-first search from the graph's entrypoints.

    Returns the final top-L candidate ids (closest first) and every expanded
    id in expansion order.
    """
    if graph.n < 1:
        raise ValueError("empty graph")
    if L < 1:
        raise ValueError("L must be >= 1")
    data = _build_geometry(dataset)
    q = np.asarray(query, dtype=np.float64).ravel()
    if q.shape[0] != data.shape[1]:
        raise ValueError(f"dimensionality mismatch: {q.shape[0]} != {data.shape[1]}")
    s = _Scratch(graph.n, L, graph.R)
    n_pool, n_vis = _greedy(data, graph.adjacency, graph.degrees, graph.entrypoints, q, L,
                            s.seen, s.touched, s.pool_ids, s.pool_d, s.pool_exp, s.visited)
    return s.pool_ids[:n_pool].tolist(), s.visited[:n_vis].tolist()


def robust_prune(node: int, candidates, alpha: float, R: int, dataset: Dataset) -> list[int]:
    """Diversity-preserving pruning of ``candidates`` down to at most R neighbours.

    Candidates are visited closest-first (ties by id); each kept candidate c
    removes every remaining x with ``alpha * d(c, x) <= d(node, x)``, where d
    is the squared Euclidean key used throughout the build.
    """
    cands = np.unique(np.asarray(list(candidates), dtype=np.int64))
    if np.any(cands == node):
        raise ValueError("candidates must exclude the node itself")
    out = np.empty(max(R, 1), dtype=np.int64)
    k = _prune(_build_geometry(dataset), int(node), cands, len(cands), float(alpha), int(R), out)
    return out[:k].tolist()


def select_entrypoints(dataset: Dataset, n_ep: int, seed: int) -> np.ndarray:
    """Medoid followed by n_ep - 1 seeded random distinct nodes."""
    if n_ep > dataset.n:
        raise ValueError(f"n_ep={n_ep} exceeds N={dataset.n}")
    first = medoid(dataset, seed)
    if n_ep == 1:
        return np.array([first], dtype=np.int64)
    rng = np.random.default_rng([seed, 1])
    others = np.delete(np.arange(dataset.n), first)
    extra = rng.choice(others, size=n_ep - 1, replace=False)
    return np.concatenate([[first], extra]).astype(np.int64)


def _repair_reachability(data: np.ndarray, adj: np.ndarray, deg: np.ndarray, starts: np.ndarray) -> int:
    """Link unreachable nodes from their nearest reachable node; returns #links added.

    A full list gives up its last slot v to the new node u, which takes over
    the edge to v. Old paths through r -> v now run r -> u -> v, so the
    reachable set only grows and the loop ends after at most N links.
    """
    n, R = adj.shape
    mark = _bfs(adj, deg, starts, np.zeros(n, dtype=np.bool_))
    added = 0
    while not mark.all():
        u = int(np.flatnonzero(~mark)[0])
        reach = np.flatnonzero(mark)
        diff = data[reach] - data[u]
        d2 = np.einsum("ij,ij->i", diff, diff)
        slack = deg[reach] < R
        pool = reach[slack] if slack.any() else reach
        pd = d2[slack] if slack.any() else d2
        r = int(pool[np.argmin(pd)])
        if deg[r] < R:
            adj[r, deg[r]] = u
            deg[r] += 1
        else:
            v = int(adj[r, R - 1])
            adj[r, R - 1] = u
            if v not in adj[u, : deg[u]]:
                if deg[u] < R:
                    adj[u, deg[u]] = v
                    deg[u] += 1
                else:
                    adj[u, R - 1] = v
        added += 1
        # everything marked stays reachable, so extend the marking from u only
        mark = _bfs(adj, deg, np.array([u], dtype=np.int64), mark)
    return added


def build_vamana(dataset: Dataset, params: BuildParams | None = None) -> VamanaGraph:
    params = params or BuildParams()
    n, R = dataset.n, params.R
    starts = select_entrypoints(dataset, params.n_ep, params.seed)
    if n == 1:
        return VamanaGraph(np.zeros((1, R), dtype=np.int64), np.zeros(1, dtype=np.int64), starts)
    data = _build_geometry(dataset)
    adj = np.zeros((n, R), dtype=np.int64)
    deg = np.zeros(n, dtype=np.int64)
    s = _Scratch(n, params.L_build, R)
    rng = np.random.default_rng(params.seed)
    for alpha in (1.0, params.alpha):
        order = rng.permutation(n).astype(np.int64)
        _build_pass(data, adj, deg, order, starts, params.L_build, float(alpha), R, s.seen, s.touched,
                    s.pool_ids, s.pool_d, s.pool_exp, s.visited, s.cand, s.pruned)
    _repair_reachability(data, adj, deg, starts)
    graph = VamanaGraph(adj, deg, starts)
    return graph
