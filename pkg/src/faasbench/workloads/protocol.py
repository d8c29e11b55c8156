"""Length-prefixed frames: 4-byte big-endian length, then a JSON document."""

from __future__ import annotations

import struct

HEADER = struct.Struct(">I")
MAX_FRAME = 16 * 1024 * 1024
# stderr line a bytecode host writes once its engine and module are loaded
LOAD_TAG = "load_ns="


class FrameError(IOError):
    pass


def encode_frame(body: bytes) -> bytes:
    return HEADER.pack(len(body)) + body


def read_exact(read, n: int) -> bytes:
    """Reads exactly n bytes through ``read(k) -> bytes``; raises on EOF."""
    chunks = []
    while n:
        chunk = read(min(n, 1 << 20))
        if not chunk:
            raise FrameError("connection closed mid-frame")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_frame(read) -> bytes:
    (n,) = HEADER.unpack(read_exact(read, HEADER.size))
    if n > MAX_FRAME:
        raise FrameError(f"frame of {n} bytes exceeds limit")
    return read_exact(read, n)
