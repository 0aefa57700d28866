"""Readers and writers for the SIFT distribution formats (fvecs/bvecs/ivecs).

Each record is a little-endian int32 dimension followed by that many
elements: float32 for fvecs, uint8 for bvecs, int32 for ivecs.
"""

from __future__ import annotations

import os

import numpy as np

_ELEMENT = {
    "fvecs": np.dtype("<f4"),
    "bvecs": np.dtype("u1"),
    "ivecs": np.dtype("<i4"),
}


def format_of(path: str | os.PathLike) -> str:
    ext = os.path.splitext(os.fspath(path))[1].lstrip(".").lower()
    if ext not in _ELEMENT:
        raise ValueError(f"cannot infer vecs format from {path!r}; expected .fvecs/.bvecs/.ivecs")
    return ext


def read_vecs(path: str | os.PathLike, fmt: str | None = None, count: int | None = None) -> np.ndarray:
    fmt = fmt or format_of(path)
    elem = _ELEMENT[fmt]
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        raise ValueError(f"{path}: empty file")
    if raw.size < 4:
        raise ValueError(f"{path}: truncated header")
    dim = int(raw[:4].view("<i4")[0])
    if dim <= 0:
        raise ValueError(f"{path}: invalid dimension {dim}")
    rec = 4 + dim * elem.itemsize
    if raw.size % rec:
        raise ValueError(f"{path}: size {raw.size} is not a multiple of record size {rec}")
    rows = raw.reshape(-1, rec)
    if count is not None:
        rows = rows[:count]
    dims = rows[:, :4].copy().view("<i4").ravel()
    if not np.all(dims == dim):
        bad = int(np.flatnonzero(dims != dim)[0])
        raise ValueError(f"{path}: non-uniform dimension at record {bad}")
    body = np.ascontiguousarray(rows[:, 4:]).view(elem)
    native = {"fvecs": np.float32, "bvecs": np.uint8, "ivecs": np.int32}[fmt]
    return body.astype(native, copy=False).reshape(len(rows), dim)


def write_vecs(path: str | os.PathLike, data: np.ndarray, fmt: str | None = None) -> None:
    fmt = fmt or format_of(path)
    elem = _ELEMENT[fmt]
    arr = np.asarray(data)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D array")
    n, dim = arr.shape
    body = np.ascontiguousarray(arr.astype(elem, copy=False)).view(np.uint8).reshape(n, dim * elem.itemsize)
    header = np.full((n, 1), dim, dtype="<i4").view(np.uint8)
    with open(path, "wb") as f:
        f.write(np.hstack([header, body]).tobytes())
