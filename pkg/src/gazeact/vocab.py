"""Visual word vocabulary: k-means over frame descriptors, nearest-center
assignment, and the binary model format."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ParameterError, ParseError

_VOCAB_MAGIC = b"GAVC"
_VOCAB_VERSION = 1


@dataclass
class VocabModel:
    centers: np.ndarray  # (k, dim) float64
    training_inertia: float
    seed: int
    inertia_history: list = field(default_factory=list)

    @property
    def k(self):
        return self.centers.shape[0]

    @property
    def dim(self):
        return self.centers.shape[1]


def _sq_dists(X, centers):
    """Squared Euclidean distances, (n, k)."""
    C = np.asarray(centers, dtype=X.dtype)
    d2 = (
        np.einsum("ij,ij->i", X, X)[:, None]
        - 2.0 * (X @ C.T)
        + np.einsum("ij,ij->i", C, C)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeanspp(X, k, rng):
    """Greedy k-means++: at each step several candidates are drawn with
    probability proportional to squared distance and the one that lowers the
    potential most is kept."""
    n = X.shape[0]
    n_candidates = 2 + int(math.log(k)) if k > 1 else 1
    centers = np.empty((k, X.shape[1]), dtype=X.dtype)
    first = int(rng.integers(n))
    centers[0] = X[first]
    d2 = _sq_dists(X, centers[:1])[:, 0]
    for i in range(1, k):
        total = float(d2.sum())
        if total <= 0:
            # all remaining points coincide with existing centers
            centers[i] = X[int(rng.integers(n))]
            continue
        cand = rng.choice(n, size=n_candidates, p=d2 / total)
        best_pot = np.inf
        best_j = cand[0]
        best_d2 = d2
        for j in cand:
            dj = np.minimum(d2, _sq_dists(X, X[j : j + 1])[:, 0])
            pot = float(dj.sum())
            if pot < best_pot:
                best_pot = pot
                best_j = j
                best_d2 = dj
        centers[i] = X[int(best_j)]
        d2 = best_d2
    return centers


def fit_kmeans(embeddings, k: int, seed: int, max_iter: int = 100) -> VocabModel:
    """Lloyd's algorithm with k-means++ seeding.

    Runs until assignments stop changing or max_iter, reseeding any cluster
    that empties to the point farthest from its assigned center. Records the
    inertia (sum of squared distances to assigned centers) after every
    assignment step; the final value is the model's training inertia.
    """
    X = np.asarray(embeddings)
    if X.ndim != 2:
        raise ParameterError(f"embeddings must be 2-D, got shape {X.shape}")
    n = X.shape[0]
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if n < k:
        raise ParameterError(f"need at least k={k} points, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    centers = _kmeanspp(X, k, rng).astype(np.float64)

    history = []
    assign = None
    for _ in range(max_iter):
        d2 = _sq_dists(X, centers.astype(X.dtype))
        new_assign = np.argmin(d2, axis=1)
        point_d2 = d2[np.arange(n), new_assign]
        history.append(float(point_d2.sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            members = assign == j
            if members.any():
                centers[j] = X[members].mean(axis=0, dtype=np.float64)
        empties = [j for j in range(k) if not (assign == j).any()]
        if empties:
            order = np.argsort(-point_d2, kind="stable")
            for slot, j in enumerate(empties):
                centers[j] = X[order[slot]]
    final_d2 = _sq_dists(X, centers.astype(X.dtype))
    final_inertia = float(final_d2[np.arange(n), np.argmin(final_d2, axis=1)].sum())
    return VocabModel(
        centers=centers,
        training_inertia=final_inertia,
        seed=seed,
        inertia_history=history,
    )


def assign_word(embedding, vocab: VocabModel) -> int:
    """Index of the nearest center (squared Euclidean, ties to lowest index)."""
    x = np.asarray(embedding, dtype=np.float64).ravel()
    if x.shape[0] != vocab.dim:
        raise ParameterError(f"embedding has dim {x.shape[0]}, vocabulary expects {vocab.dim}")
    d2 = _sq_dists(x[None, :], vocab.centers)
    return int(np.argmin(d2[0]))


def assign_words(embeddings, vocab: VocabModel) -> np.ndarray:
    """Vectorized nearest-center assignment for a batch of descriptors."""
    X = np.asarray(embeddings)
    if X.ndim != 2 or X.shape[1] != vocab.dim:
        raise ParameterError(f"embeddings shape {X.shape} does not match vocabulary dim {vocab.dim}")
    d2 = _sq_dists(X.astype(np.float64), vocab.centers)
    return np.argmin(d2, axis=1)


def save_vocab(vocab: VocabModel, path) -> None:
    """GAVC magic, version, k, dim, then centers as little-endian float32."""
    with open(Path(path), "wb") as fh:
        fh.write(_VOCAB_MAGIC)
        fh.write(struct.pack("<III", _VOCAB_VERSION, vocab.k, vocab.dim))
        fh.write(np.ascontiguousarray(vocab.centers, dtype="<f4").tobytes())


def load_vocab(path) -> VocabModel:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _VOCAB_MAGIC:
            raise ParseError(f"bad magic {magic!r}, expected {_VOCAB_MAGIC!r}", path=path)
        version, k, dim = struct.unpack("<III", fh.read(12))
        if version != _VOCAB_VERSION:
            raise ParseError(f"unsupported version {version}", path=path)
        data = fh.read(k * dim * 4)
        if len(data) != k * dim * 4:
            raise ParseError("truncated center data", path=path)
    centers = np.frombuffer(data, dtype="<f4").reshape(k, dim).astype(np.float64)
    if len(np.unique(centers, axis=0)) != k:
        raise ParseError("vocabulary contains duplicate centers", path=path)
    # inertia and seed are not part of the file format
    return VocabModel(centers=centers, training_inertia=float("nan"), seed=-1)
