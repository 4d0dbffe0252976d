"""Binary interchange formats shared across the pipeline tools."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import ParseError

#: fc7-style descriptor length expected by the visual channel.
EMBED_DIM = 4096

_EMBED_MAGIC = b"GAEM"
_EMBED_VERSION = 1


def write_embeddings(embeddings: np.ndarray, path, comment: str = "") -> None:
    """Write per-frame descriptors: GAEM magic, version, count, dim, a
    free-text comment (provenance), then little-endian float32, frame-major."""
    arr = np.ascontiguousarray(embeddings, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"embeddings must be 2-D, got shape {arr.shape}")
    comment_bytes = comment.encode("utf-8")
    with open(Path(path), "wb") as fh:
        fh.write(_EMBED_MAGIC)
        fh.write(struct.pack("<III", _EMBED_VERSION, arr.shape[0], arr.shape[1]))
        fh.write(struct.pack("<I", len(comment_bytes)))
        fh.write(comment_bytes)
        fh.write(arr.tobytes())


def read_embeddings(path):
    """Read a GAEM file; returns (float32 array of shape (count, dim), comment)."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _EMBED_MAGIC:
            raise ParseError(f"bad magic {magic!r}, expected {_EMBED_MAGIC!r}", path=path)
        header = fh.read(12)
        if len(header) != 12:
            raise ParseError("truncated header", path=path)
        version, count, dim = struct.unpack("<III", header)
        if version != _EMBED_VERSION:
            raise ParseError(f"unsupported version {version}", path=path)
        (comment_len,) = struct.unpack("<I", fh.read(4))
        comment = fh.read(comment_len).decode("utf-8")
        data = fh.read(count * dim * 4)
        if len(data) != count * dim * 4:
            raise ParseError(
                f"truncated data: expected {count * dim * 4} bytes, got {len(data)}", path=path
            )
        if fh.read(1):
            raise ParseError("trailing bytes after embedding data", path=path)
    arr = np.frombuffer(data, dtype="<f4").reshape(count, dim)
    return arr, comment
