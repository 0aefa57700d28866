"""Shared builders and session fixtures; acceptance lines are echoed in the terminal summary."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from aisaq.bench import gaussian_mixture
from aisaq.core import Dataset, groundtruth
from aisaq.graph import BuildParams, VamanaGraph, build_vamana
from aisaq.layout import serialize_index
from aisaq.pq import PQCodebook, encode, train_pq

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@dataclass
class Built:
    dataset: Dataset
    graph: VamanaGraph
    codebook: PQCodebook
    codes: np.ndarray
    aisaq: Path
    diskann: Path
    queries: np.ndarray
    gt: np.ndarray | None = None
    build_seconds: float = 0.0


def make_built(out_dir, vectors, queries, *, R=32, L_build=64, alpha=1.2, m=8, seed=0, n_ep=1,
               metric="l2", codebook=None, external=None, sidecar=True, name="index") -> Built:
    t0 = time.perf_counter()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = Dataset(vectors, metric)
    cb = codebook if codebook is not None else train_pq(ds, m, seed=seed)
    codes = encode(ds.vectors, cb)
    graph = build_vamana(ds, BuildParams(R=R, L_build=L_build, alpha=alpha, seed=seed, n_ep=n_ep))
    a = out_dir / f"{name}.aisaq"
    d = out_dir / f"{name}.diskann"
    # the AiSAQ file also gets a sidecar so it can be searched with RAM-resident codes
    serialize_index(a, graph, ds, cb, codes, "aisaq", external_codebook=external, write_sidecar=sidecar)
    serialize_index(d, graph, ds, cb, codes, "diskann", external_codebook=external)
    return Built(ds, graph, cb, codes, a, d, np.asarray(queries), build_seconds=time.perf_counter() - t0)


def integer_grid(n: int, d: int, m: int, seed: int, lo: int = -100, hi: int = 100) -> np.ndarray:
    """Every subvector is one of 256 integer points per subspace, so PQ is lossless and keys are exact."""
    rng = np.random.default_rng(seed)
    sub = d // m
    vals = [rng.integers(lo, hi + 1, size=(256, sub)) for _ in range(m)]
    pick = rng.integers(0, 256, size=(n, m))
    return np.hstack([vals[j][pick[:, j]] for j in range(m)]).astype(np.float32)


@pytest.fixture(scope="session")
def clustered10k(tmp_path_factory):
    """10,000 x 16 Gaussian mixture, 1,000 queries, R=32 L_build=64 alpha=1.2 m=8."""
    both = gaussian_mixture(11_000, 16, 20, seed=7)
    built = make_built(tmp_path_factory.mktemp("c10k"), both[:10_000], both[10_000:],
                       R=32, L_build=64, alpha=1.2, m=8, seed=0)
    built.gt = groundtruth(built.dataset, built.queries, 10)
    return built


@pytest.fixture(scope="session")
def small(tmp_path_factory):
    """1,000 x 8 index used by most unit tests."""
    both = gaussian_mixture(1_100, 8, 8, seed=3)
    built = make_built(tmp_path_factory.mktemp("small"), both[:1_000], both[1_000:],
                       R=16, L_build=32, alpha=1.2, m=4, seed=1)
    built.gt = groundtruth(built.dataset, built.queries, 10)
    return built


@pytest.fixture(scope="session")
def grid_index(tmp_path_factory):
    """2,000-node zero-distortion index over an integer grid (d=16, m=8)."""
    x = integer_grid(2_000, 16, 8, seed=1)
    q = np.random.default_rng(5).integers(-100, 101, size=(200, 16)).astype(np.float32)
    return make_built(tmp_path_factory.mktemp("grid"), x, q, R=32, L_build=64, m=8, seed=0)
