"""Block-aligned positional reads, uncached when the platform allows it.

``direct`` opens the file with O_DIRECT and reads into page-aligned buffers.
If O_DIRECT is unavailable (or the filesystem rejects it, e.g. tmpfs) the
reader falls back to ``buffered`` reads and asks the kernel to drop the
file's cached pages first. ``io_path`` always reports the path that ran.
"""

from __future__ import annotations

import mmap
import os
import threading

IO_PATHS = ("auto", "direct", "buffered")


def drop_cache_hint(fd: int) -> None:
    if hasattr(os, "posix_fadvise"):
        try:
            os.posix_fadvise(fd, 0, 0, os.POSIX_FADV_DONTNEED)
        except OSError:
            pass


def read_file_uncached(path: str | os.PathLike, offset: int = 0, length: int | None = None) -> bytes:
    """Plain read of a whole file (or a range) after a cache-drop hint."""
    fd = os.open(path, os.O_RDONLY)
    try:
        drop_cache_hint(fd)
        if length is None:
            length = os.fstat(fd).st_size - offset
        data = os.pread(fd, length, offset)
    finally:
        os.close(fd)
    if len(data) != length:
        raise OSError(f"{path}: short read at offset {offset} ({len(data)} of {length} bytes)")
    return data


class BlockReader:
    def __init__(self, path: str | os.PathLike, block_size: int = 4096, io_path: str = "auto") -> None:
        if io_path not in IO_PATHS:
            raise ValueError(f"io_path must be one of {IO_PATHS}")
        self.path = os.fspath(path)
        self.block_size = block_size
        self._local = threading.local()
        self.fd = -1
        self.io_path = "buffered"
        if io_path in ("auto", "direct") and hasattr(os, "O_DIRECT") and block_size % 512 == 0:
            try:
                fd = os.open(self.path, os.O_RDONLY | os.O_DIRECT)
            except OSError:
                fd = -1
            if fd >= 0:
                self.fd = fd
                self.io_path = "direct"
                try:
                    self._direct_read(0, block_size)
                except OSError:
                    os.close(fd)
                    self.fd = -1
                    self.io_path = "buffered"
        if self.fd < 0:
            self.fd = os.open(self.path, os.O_RDONLY)
            drop_cache_hint(self.fd)
            if hasattr(os, "posix_fadvise"):
                try:
                    os.posix_fadvise(self.fd, 0, 0, os.POSIX_FADV_RANDOM)
                except OSError:
                    pass
        self.size = os.fstat(self.fd).st_size

    def _buffer(self, length: int) -> mmap.mmap:
        buf = getattr(self._local, "buf", None)
        if buf is None or len(buf) < length:
            if buf is not None:
                buf.close()
            # anonymous mappings are page aligned, as O_DIRECT requires
            buf = mmap.mmap(-1, max(length, mmap.PAGESIZE))
            self._local.buf = buf
        return buf

    def _direct_read(self, offset: int, length: int) -> bytes:
        buf = self._buffer(length)
        view = memoryview(buf)[:length]
        try:
            got = os.preadv(self.fd, [view], offset)
            data = bytes(view[:got])
        finally:
            view.release()
        return data

    def pread(self, offset: int, length: int) -> bytes:
        if self.io_path == "direct":
            data = self._direct_read(offset, length)
        else:
            data = os.pread(self.fd, length, offset)
        if len(data) != length:
            raise OSError(
                f"{self.path}: short read at byte offset {offset}: got {len(data)} of {length} bytes"
            )
        return data

    def close(self) -> None:
        if self.fd >= 0:
            os.close(self.fd)
            self.fd = -1

    @property
    def closed(self) -> bool:
        return self.fd < 0

    def __enter__(self) -> "BlockReader":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
