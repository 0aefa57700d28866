"""Single-file, block-aligned index layout with optional inline PQ codes.

File structure (all integers little-endian, padding zero-filled)::

    [metadata region]   ceil(4096 / B) blocks; fixed header, entrypoint ids
                        and entrypoint PQ codes, CRC32 of the header bytes
    [codebook region]   inline codebook padded to a block multiple (absent
                        when the codebook lives in an external shared file)
    [node region]       one chunk per node, located by ``node_offset``

Node chunk: full-precision vector | u32 degree | R x u32 neighbour ids |
(AiSAQ mode only) R x m bytes of the neighbours' PQ codes, slot j holding the
code of neighbour j. Chunks smaller than a block are packed
``B // chunk_size`` per block; larger chunks own ``ceil(chunk_size / B)``
whole blocks. DiskANN mode omits the inline codes and writes the N x m code
array to a ``.pq`` sidecar that is loaded into RAM at open time.
"""

from __future__ import annotations

import enum
import hashlib
import math
import os
import struct
import threading
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from .blockio import BlockReader, read_file_uncached
from .core import Dataset, ElementKind, Metric
from .graph import VamanaGraph
from .pq import PQCodebook, encode

B_NUM = 4
DEFAULT_BLOCK = 4096
METADATA_BYTES = 4096
INDEX_MAGIC = b"AISAQIX\x00"
INDEX_VERSION = 1
SIDECAR_SUFFIX = ".pq"
FIT_SLACK = 0.01

_FIXED = struct.Struct("<8sI BBBBB3x IIIIII III I QQQQ 32s H")
MAX_PATH_BYTES = 1024


class Mode(enum.IntEnum):
    DISKANN = 0
    AISAQ = 1

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, Mode):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = str(value).strip().lower()
        if key in ("diskann", "ram", "memory"):
            return cls.DISKANN
        if key in ("aisaq", "chunk", "storage"):
            return cls.AISAQ
        raise ValueError(f"unknown mode {value!r}")


class CorruptIndexError(ValueError):
    """The index file is malformed; the message names the failing byte range."""


# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class ChunkGeometry:
    b_full: int
    R: int
    b_pq: int
    mode: Mode = Mode.AISAQ
    block_size: int = DEFAULT_BLOCK
    b_num: int = B_NUM

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        if self.b_full < 1 or self.b_num < 1 or self.block_size < 1:
            raise ValueError("b_full, b_num and block_size must be positive")
        if self.R < 0 or self.b_pq < 0:
            raise ValueError("R and b_pq must be non-negative")

    @property
    def chunk_size(self) -> int:
        return chunk_size(self)

    @property
    def blocks_per_chunk(self) -> int:
        return -(-self.chunk_size // self.block_size)

    @property
    def chunks_per_block(self) -> int:
        return self.block_size // self.chunk_size

    @property
    def read_length(self) -> int:
        return self.blocks_per_chunk * self.block_size

    def region_bytes(self, n: int) -> int:
        if self.chunks_per_block >= 1:
            return -(-n // self.chunks_per_block) * self.block_size
        return n * self.read_length


def chunk_size(geometry: ChunkGeometry) -> int:
    """Bytes of one node chunk: b_full + b_num(R+1), plus R*b_pq inline in AiSAQ mode."""
    g = geometry
    base = g.b_full + g.b_num * (g.R + 1)
    if g.mode is Mode.AISAQ:
        return base + g.R * g.b_pq
    return base


@dataclass(frozen=True)
class DegreeCheck:
    ok: bool
    chunk_size: int
    blocks: int
    slack: int
    suggested_R: int
    message: str


def validate_degree(geometry: ChunkGeometry) -> DegreeCheck:
    """Check that chunks fill their blocks.

    A chunk that fits in one block always satisfies ``chunk <= B/n`` for
    ``n = B // chunk`` and is accepted. A multi-block chunk is accepted when
    the unused tail of its last block is at most 1% of its read length;
    otherwise the largest R filling the same number of blocks is suggested.
    """
    g = geometry
    size = g.chunk_size
    B = g.block_size
    if size <= B:
        n = B // size
        return DegreeCheck(True, size, 1, B // n - size, g.R,
                           f"chunk {size} B <= B/{n} = {B // n} B ({n} per block)")
    blocks = g.blocks_per_chunk
    span = blocks * B
    slack = span - size
    if slack <= FIT_SLACK * span:
        return DegreeCheck(True, size, blocks, slack, g.R,
                           f"chunk {size} B fills {blocks} blocks ({slack} B slack)")
    per_edge = g.b_num + (g.b_pq if g.mode is Mode.AISAQ else 0)
    best = (span - g.b_full - g.b_num) // per_edge
    return DegreeCheck(False, size, blocks, slack, int(best),
                       f"chunk {size} B leaves {slack} B of {span} B unused; "
                       f"R={best} would fill {blocks} blocks")


@dataclass(frozen=True)
class NodeLocation:
    offset: int          # block-aligned byte offset of the read
    length: int          # bytes to read (whole blocks)
    offset_in_read: int  # where the chunk starts inside the read buffer


def node_offset(node_id: int, geometry: ChunkGeometry, node_region: int = 0,
                n: int | None = None) -> NodeLocation:
    if node_id < 0 or (n is not None and node_id >= n):
        raise IndexError(f"node id {node_id} out of range [0, {n})")
    g = geometry
    cpb = g.chunks_per_block
    if cpb >= 1:
        block, slot = divmod(node_id, cpb)
        return NodeLocation(node_region + block * g.block_size, g.block_size, slot * g.chunk_size)
    return NodeLocation(node_region + node_id * g.read_length, g.read_length, 0)


# ---------------------------------------------------------------------------
# metadata


@dataclass(frozen=True)
class IndexMetadata:
    mode: Mode
    metric: Metric
    kind: ElementKind
    n: int
    d: int
    R: int
    m: int
    block_size: int
    chunk_size: int
    blocks_per_chunk: int
    chunks_per_block: int
    meta_size: int
    codebook_external: bool
    codebook_offset: int
    codebook_length: int
    codebook_hash: bytes
    codebook_path: str
    node_region: int
    file_size: int
    has_sidecar: bool
    entrypoints: np.ndarray
    entry_codes: np.ndarray
    version: int = INDEX_VERSION

    @property
    def n_ep(self) -> int:
        return len(self.entrypoints)

    @property
    def geometry(self) -> ChunkGeometry:
        return ChunkGeometry(self.d * self.kind.itemsize, self.R, self.m, self.mode, self.block_size)

    def pack(self) -> bytes:
        path = self.codebook_path.encode("utf-8")
        if len(path) > MAX_PATH_BYTES:
            raise ValueError("external codebook path too long for metadata block")
        head = _FIXED.pack(
            INDEX_MAGIC, self.version,
            int(self.mode), int(self.metric), int(self.kind), int(self.codebook_external), int(self.has_sidecar),
            self.n, self.d, self.R, self.m, self.n_ep, self.block_size,
            self.chunk_size, self.blocks_per_chunk, self.chunks_per_block, self.meta_size,
            self.codebook_offset, self.codebook_length, self.node_region, self.file_size,
            self.codebook_hash, len(path),
        )
        body = (
            head
            + path
            + np.asarray(self.entrypoints, dtype="<u4").tobytes()
            + np.asarray(self.entry_codes, dtype=np.uint8).tobytes()
        )
        body += struct.pack("<I", zlib.crc32(body))
        if len(body) > min(self.meta_size, METADATA_BYTES):
            raise ValueError(
                f"metadata needs {len(body)} bytes but must fit in {min(self.meta_size, METADATA_BYTES)}; "
                f"n_ep*(4+m) = {self.n_ep * (4 + self.m)} is too large"
            )
        return body + bytes(self.meta_size - len(body))

    @classmethod
    def unpack(cls, blob: bytes) -> "IndexMetadata":
        if len(blob) < _FIXED.size:
            raise CorruptIndexError(f"metadata truncated: bytes [0, {_FIXED.size}) unreadable, got {len(blob)}")
        fields = _FIXED.unpack_from(blob, 0)
        (magic, version, mode, metric, kind, cb_ext, sidecar,
         n, d, R, m, n_ep, block_size, csize, bpc, cpb, meta_size,
         cb_off, cb_len, node_region, file_size, cb_hash, path_len) = fields
        if magic != INDEX_MAGIC:
            raise CorruptIndexError(f"bad magic {magic!r} at bytes [0, 8)")
        if version != INDEX_VERSION:
            raise CorruptIndexError(f"unsupported index version {version} at bytes [8, 12)")
        pos = _FIXED.size
        end = pos + path_len + 4 * n_ep + n_ep * m
        if end + 4 > len(blob):
            raise CorruptIndexError(f"metadata truncated: bytes [{pos}, {end + 4}) unreadable")
        crc = struct.unpack_from("<I", blob, end)[0]
        if crc != zlib.crc32(blob[:end]):
            raise CorruptIndexError(f"metadata checksum mismatch over bytes [0, {end})")
        path = blob[pos : pos + path_len].decode("utf-8")
        pos += path_len
        eps = np.frombuffer(blob, dtype="<u4", count=n_ep, offset=pos).astype(np.int64)
        pos += 4 * n_ep
        codes = np.frombuffer(blob, dtype=np.uint8, count=n_ep * m, offset=pos).reshape(n_ep, m).copy()
        return cls(Mode(mode), Metric(metric), ElementKind(kind), n, d, R, m, block_size, csize, bpc, cpb,
                   meta_size, bool(cb_ext), cb_off, cb_len, cb_hash, path, node_region, file_size,
                   bool(sidecar), eps, codes, version)


def metadata_region_size(block_size: int) -> int:
    return -(-METADATA_BYTES // block_size) * block_size


def sidecar_path(index_path) -> str:
    return os.fspath(index_path) + SIDECAR_SUFFIX


# ---------------------------------------------------------------------------
# serialization


def _chunk_bytes(vectors: np.ndarray, graph: VamanaGraph, codes: np.ndarray, geometry: ChunkGeometry,
                 lo: int, hi: int) -> np.ndarray:
    g = geometry
    n = hi - lo
    out = np.zeros((n, g.chunk_size), dtype=np.uint8)
    pos = 0
    vec = np.ascontiguousarray(vectors[lo:hi].astype(vectors.dtype.newbyteorder("<"), copy=False))
    out[:, : g.b_full] = vec.view(np.uint8).reshape(n, g.b_full)
    pos = g.b_full
    deg = graph.degrees[lo:hi]
    out[:, pos : pos + 4] = deg.astype("<u4").view(np.uint8).reshape(n, 4)
    pos += 4
    slot_used = np.arange(g.R)[None, :] < deg[:, None]
    ids = np.where(slot_used, graph.adjacency[lo:hi], 0).astype("<u4")
    out[:, pos : pos + 4 * g.R] = ids.view(np.uint8).reshape(n, 4 * g.R)
    pos += 4 * g.R
    if g.mode is Mode.AISAQ and g.R:
        inline = codes[ids.astype(np.int64)]
        inline[~slot_used] = 0
        out[:, pos : pos + g.R * g.b_pq] = inline.reshape(n, g.R * g.b_pq)
    return out


def _place_chunks(chunks: np.ndarray, geometry: ChunkGeometry) -> bytes:
    g = geometry
    n = chunks.shape[0]
    cpb = g.chunks_per_block
    if cpb >= 1:
        nblocks = -(-n // cpb)
        region = np.zeros((nblocks, g.block_size), dtype=np.uint8)
        padded = np.zeros((nblocks * cpb, g.chunk_size), dtype=np.uint8)
        padded[:n] = chunks
        region[:, : cpb * g.chunk_size] = padded.reshape(nblocks, cpb * g.chunk_size)
    else:
        region = np.zeros((n, g.read_length), dtype=np.uint8)
        region[:, : g.chunk_size] = chunks
    return region.tobytes()


def serialize_index(path, graph: VamanaGraph, dataset: Dataset, codebook: PQCodebook,
                    codes: np.ndarray | None = None, mode="aisaq", *,
                    block_size: int = DEFAULT_BLOCK, external_codebook: str | os.PathLike | None = None,
                    write_sidecar: bool | None = None, batch: int = 65536) -> DegreeCheck:
    """Write an index file (and the ``.pq`` sidecar in DiskANN mode).

    ``external_codebook`` names an already-saved codebook file to reference
    by path and content hash instead of embedding the codebook. Returns the
    degree-fit check for the chosen geometry; a poor fit is not an error.
    """
    mode = Mode.parse(mode)
    if codes is None:
        codes = encode(dataset.vectors, codebook)
    codes = np.ascontiguousarray(codes, dtype=np.uint8)
    if graph.n != dataset.n or codes.shape != (dataset.n, codebook.m) or codebook.d != dataset.d:
        raise ValueError("graph, dataset, codes and codebook shapes are inconsistent")
    if block_size % 512:
        raise ValueError("block_size must be a multiple of 512")
    if write_sidecar is None:
        write_sidecar = mode is Mode.DISKANN
    if mode is Mode.DISKANN and not write_sidecar:
        raise ValueError("DiskANN mode keeps PQ codes in RAM and needs the sidecar")

    geometry = ChunkGeometry(dataset.d * dataset.kind.itemsize, graph.R, codebook.m, mode, block_size)
    check = validate_degree(geometry)
    meta_size = metadata_region_size(block_size)

    if external_codebook is not None:
        cb_blob = read_file_uncached(external_codebook)
        if PQCodebook.from_bytes(cb_blob) != codebook:
            raise ValueError(f"{external_codebook} does not hold the supplied codebook")
        cb_ext, cb_off, cb_len, cb_region = True, 0, len(cb_blob), b""
        cb_path = os.fspath(external_codebook)
    else:
        cb_blob = codebook.to_bytes()
        cb_ext, cb_off, cb_len = False, meta_size, len(cb_blob)
        cb_region = cb_blob + bytes(-len(cb_blob) % block_size)
        cb_path = ""
    node_region = meta_size + len(cb_region)
    file_size = node_region + geometry.region_bytes(dataset.n)

    eps = graph.entrypoints
    meta = IndexMetadata(
        mode=mode, metric=dataset.metric, kind=dataset.kind, n=dataset.n, d=dataset.d, R=graph.R,
        m=codebook.m, block_size=block_size, chunk_size=geometry.chunk_size,
        blocks_per_chunk=geometry.blocks_per_chunk, chunks_per_block=geometry.chunks_per_block,
        meta_size=meta_size, codebook_external=cb_ext, codebook_offset=cb_off, codebook_length=cb_len,
        codebook_hash=hashlib.sha256(cb_blob).digest(), codebook_path=cb_path, node_region=node_region,
        file_size=file_size, has_sidecar=bool(write_sidecar), entrypoints=eps, entry_codes=codes[eps],
    )
    header = meta.pack()

    cpb = geometry.chunks_per_block
    step = batch if cpb < 1 else max(cpb, batch // cpb * cpb)
    with open(path, "wb") as f:
        f.write(header)
        f.write(cb_region)
        for lo in range(0, dataset.n, step):
            hi = min(dataset.n, lo + step)
            f.write(_place_chunks(_chunk_bytes(dataset.vectors, graph, codes, geometry, lo, hi), geometry))
        if f.tell() != file_size:
            raise AssertionError(f"wrote {f.tell()} bytes, expected {file_size}")
    if write_sidecar:
        with open(sidecar_path(path), "wb") as f:
            f.write(codes.tobytes())
    return check


# ---------------------------------------------------------------------------
# reading


@dataclass
class NodeChunk:
    node_id: int
    full_vector: np.ndarray
    neighbor_ids: np.ndarray
    inline_pq: np.ndarray | None

    @property
    def neighbor_count(self) -> int:
        return len(self.neighbor_ids)


@dataclass
class IOStats:
    io_requests: int = 0
    bytes_read: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add(self, requests: int, nbytes: int) -> None:
        with self._lock:
            self.io_requests += requests
            self.bytes_read += nbytes


def _resolve(index_path, ref: str) -> str:
    if os.path.isabs(ref):
        return ref
    return os.path.join(os.path.dirname(os.path.abspath(index_path)), ref)


class IndexHandle:
    """An open index: metadata, codebook, a block reader and (DiskANN mode) the RAM code array.

    ``pq_source`` selects where neighbour PQ codes come from during search:
    ``Mode.AISAQ`` reads them from each chunk, ``Mode.DISKANN`` looks them up
    in the N x m array loaded from the sidecar. It defaults to the file mode.
    """

    def __init__(self, path, meta: IndexMetadata, reader: BlockReader, codebook: PQCodebook,
                 pq_codes: np.ndarray | None, pq_source: Mode, bytes_loaded: int, load_seconds: float,
                 codebook_reused: bool) -> None:
        self.path = os.fspath(path)
        self.meta = meta
        self.reader = reader
        self.codebook = codebook
        self.pq_codes = pq_codes
        self.pq_source = pq_source
        self.bytes_loaded = bytes_loaded
        self.load_seconds = load_seconds
        self.codebook_reused = codebook_reused
        self.stats = IOStats()
        self.geometry = meta.geometry
        g = self.geometry
        self._vec_dtype = meta.kind.dtype.newbyteorder("<")
        self._deg_at = g.b_full
        self._ids_at = g.b_full + 4
        self._pq_at = self._ids_at + 4 * g.R

    @property
    def codebook_hash(self) -> bytes:
        return self.meta.codebook_hash

    @property
    def io_path(self) -> str:
        return self.reader.io_path

    @property
    def n(self) -> int:
        return self.meta.n

    def close(self) -> None:
        self.reader.close()
        self.pq_codes = None

    @property
    def closed(self) -> bool:
        return self.reader.closed

    def __enter__(self) -> "IndexHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def locate(self, node_id: int) -> NodeLocation:
        return node_offset(node_id, self.geometry, self.meta.node_region, self.meta.n)

    def read_raw(self, node_id: int) -> tuple[bytes, int]:
        """One block-aligned read covering the chunk; returns (buffer, chunk offset)."""
        loc = self.locate(node_id)
        buf = self.reader.pread(loc.offset, loc.length)
        self.stats.add(1, loc.length)
        return buf, loc.offset_in_read

    def parse_chunk(self, node_id: int, buf: bytes, at: int, with_pq: bool = True) -> NodeChunk:
        g = self.geometry
        deg = int.from_bytes(buf[at + self._deg_at : at + self._deg_at + 4], "little")
        if deg > g.R:
            raise CorruptIndexError(
                f"node {node_id}: degree {deg} > R={g.R} at byte offset "
                f"{self.locate(node_id).offset + at + self._deg_at}"
            )
        vec = np.frombuffer(buf, dtype=self._vec_dtype, count=self.meta.d, offset=at)
        ids = np.frombuffer(buf, dtype="<u4", count=deg, offset=at + self._ids_at).astype(np.int64)
        inline = None
        if with_pq and self.meta.mode is Mode.AISAQ:
            inline = np.frombuffer(buf, dtype=np.uint8, count=deg * g.b_pq,
                                   offset=at + self._pq_at).reshape(deg, g.b_pq)
        return NodeChunk(node_id, vec, ids, inline)

    def read_node_chunk(self, node_id: int) -> NodeChunk:
        buf, at = self.read_raw(node_id)
        return self.parse_chunk(node_id, buf, at)


def _load_codebook(path, meta: IndexMetadata, reader: BlockReader) -> tuple[PQCodebook, int]:
    if meta.codebook_external:
        cb_file = _resolve(path, meta.codebook_path)
        blob = read_file_uncached(cb_file)
    else:
        region = -(-meta.codebook_length // meta.block_size) * meta.block_size
        blob = reader.pread(meta.codebook_offset, region)[: meta.codebook_length]
    if hashlib.sha256(blob).digest() != meta.codebook_hash:
        raise CorruptIndexError("codebook content hash does not match the index metadata locator")
    return PQCodebook.from_bytes(blob), len(blob)


def _read_metadata(reader: BlockReader) -> IndexMetadata:
    if reader.size < METADATA_BYTES:
        raise CorruptIndexError(
            f"{reader.path}: file is {reader.size} bytes; metadata block [0, {METADATA_BYTES}) unreadable"
        )
    head = reader.pread(0, METADATA_BYTES)
    meta = IndexMetadata.unpack(head)
    if meta.meta_size > len(head):
        head += reader.pread(len(head), meta.meta_size - len(head))
    return meta


def _open(path, codebook: PQCodebook | None, strict: bool, io_path: str, pq_source) -> IndexHandle:
    t0 = time.perf_counter()
    reader = BlockReader(path, METADATA_BYTES, io_path)
    try:
        meta = _read_metadata(reader)
        if reader.size < meta.file_size:
            raise CorruptIndexError(
                f"{path}: truncated; node region [{meta.node_region}, {meta.file_size}) needs "
                f"{meta.file_size} bytes but the file ends at byte {reader.size}"
            )
        loaded = meta.meta_size
        reused = False
        if codebook is not None and codebook.content_hash() == meta.codebook_hash:
            reused = True
        elif codebook is not None and strict:
            raise ValueError("shared codebook hash does not match the index's codebook locator")
        else:
            codebook, cb_bytes = _load_codebook(path, meta, reader)
            loaded += cb_bytes
        source = Mode.parse(pq_source) if pq_source is not None else meta.mode
        if source is Mode.AISAQ and meta.mode is not Mode.AISAQ:
            raise ValueError("a DiskANN-mode file has no inline PQ codes to search from")
        codes = None
        if source is Mode.DISKANN:
            side = sidecar_path(path)
            if not os.path.exists(side):
                raise FileNotFoundError(f"PQ sidecar {side} is required for in-memory PQ search")
            raw = read_file_uncached(side)
            if len(raw) != meta.n * meta.m:
                raise CorruptIndexError(f"{side}: {len(raw)} bytes, expected N*m = {meta.n * meta.m}")
            codes = np.frombuffer(raw, dtype=np.uint8).reshape(meta.n, meta.m)
            loaded += len(raw)
    except BaseException:
        reader.close()
        raise
    return IndexHandle(path, meta, reader, codebook, codes, source, loaded, time.perf_counter() - t0, reused)


def open_index(path, *, shared_codebook: PQCodebook | None = None, io_path: str = "auto",
               pq_source=None) -> IndexHandle:
    """Open an index and load what its search mode needs into memory.

    AiSAQ mode loads the metadata region plus the codebook (skipped when a
    ``shared_codebook`` with a matching content hash is supplied; a mismatch
    is an error). DiskANN mode additionally loads the N x m PQ array from the
    sidecar. ``bytes_loaded`` and ``load_seconds`` describe exactly that work.
    """
    return _open(path, shared_codebook, True, io_path, pq_source)


def switch_index(current: IndexHandle | None, path, *, io_path: str | None = None,
                 pq_source=None, reuse_codebook: bool = True) -> IndexHandle:
    """Close ``current`` and open ``path``, reusing the codebook when both share it.

    The shared-centroid fast path applies when the target's codebook content
    hash equals the current one; only the metadata region is then read.
    Otherwise, or with ``reuse_codebook=False``, the target's codebook is
    loaded as usual.
    """
    reuse = None
    if current is not None:
        io_path = io_path or current.reader.io_path
        if reuse_codebook:
            reuse = current.codebook
        current.close()
    return _open(path, reuse, False, io_path or "auto", pq_source)


# ---------------------------------------------------------------------------
# whole-file decoding (tests, inspect)


def load_index_contents(path) -> tuple[VamanaGraph, np.ndarray, np.ndarray, PQCodebook]:
    """Read every chunk back: (graph, vectors, codes, codebook).

    Codes come from the sidecar when present, otherwise from the inline slots
    plus the entrypoint codes in the metadata; every node reachable from an
    entrypoint appears in some neighbour slot. Conflicting inline copies of
    one node's code raise ``CorruptIndexError``.
    """
    with open_index(path, io_path="buffered") as h:
        meta = h.meta
        vectors = np.empty((meta.n, meta.d), dtype=meta.kind.dtype)
        lists = []
        codes = np.zeros((meta.n, meta.m), dtype=np.uint8)
        known = np.zeros(meta.n, dtype=bool)
        codes[meta.entrypoints] = meta.entry_codes
        known[meta.entrypoints] = True
        for i in range(meta.n):
            c = h.read_node_chunk(i)
            vectors[i] = c.full_vector
            lists.append(c.neighbor_ids.tolist())
            if c.inline_pq is not None and c.neighbor_count:
                ids = c.neighbor_ids
                seen = known[ids]
                if np.any(codes[ids[seen]] != c.inline_pq[seen]):
                    raise CorruptIndexError(f"node {i}: inline PQ codes disagree with earlier copies")
                codes[ids] = c.inline_pq
                known[ids] = True
        if meta.has_sidecar and os.path.exists(sidecar_path(path)):
            codes = np.fromfile(sidecar_path(path), dtype=np.uint8).reshape(meta.n, meta.m)
            known[:] = True
        if not known.all():
            raise CorruptIndexError(f"{int((~known).sum())} nodes have no recoverable PQ code")
        graph = VamanaGraph.from_lists(lists, meta.R, meta.entrypoints)
        return graph, vectors, codes, h.codebook


def geometry_for(dataset: Dataset, R: int, m: int, mode="aisaq", block_size: int = DEFAULT_BLOCK) -> ChunkGeometry:
    return ChunkGeometry(dataset.d * dataset.kind.itemsize, R, m, Mode.parse(mode), block_size)


def blocks(nbytes: int, block_size: int = DEFAULT_BLOCK) -> int:
    return math.ceil(nbytes / block_size)
