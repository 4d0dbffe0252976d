"""The embeddings interchange format (magic GAEM).

Layout: magic, u32 version, u32 frame count, u32 dim, u32 comment length,
UTF-8 comment (weight provenance), then little-endian float32, frame-major.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"GAEM"
VERSION = 1
EMBED_DIM = 4096


def write_embeddings(embeddings: np.ndarray, path, comment: str = "") -> None:
    arr = np.ascontiguousarray(embeddings, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"embeddings must be 2-D, got shape {arr.shape}")
    blob = comment.encode("utf-8")
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, arr.shape[0], arr.shape[1]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(arr.tobytes())


def read_embeddings(path):
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not an embeddings file")
        version, count, dim = struct.unpack("<III", fh.read(12))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        (comment_len,) = struct.unpack("<I", fh.read(4))
        comment = fh.read(comment_len).decode("utf-8")
        data = fh.read(count * dim * 4)
        if len(data) != count * dim * 4:
            raise ValueError(f"{path}: truncated data")
    return np.frombuffer(data, dtype="<f4").reshape(count, dim), comment
