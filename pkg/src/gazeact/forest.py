"""Random forest classifier built from scratch.

Bootstrap-sampled unpruned trees, a random feature subset at every node,
Gini-optimal threshold splits, majority voting across trees, and out-of-bag
error bookkeeping. Training is deterministic for a given seed: every tree
draws from its own RNG stream keyed by (seed, tree_index), so concurrent
training produces bit-identical forests.
"""

from __future__ import annotations

import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ParameterError, ParseError

_FOREST_MAGIC = b"GARF"
_FOREST_VERSION = 1


@dataclass
class ForestParams:
    n_trees: int = 200
    mtry: int | None = None  # None -> floor(sqrt(n_features))
    min_leaf: int = 1
    max_depth: int | None = None
    seed: int = 0

    def validate(self):
        if self.n_trees < 1:
            raise ParameterError("n_trees must be >= 1")
        if self.min_leaf < 1:
            raise ParameterError("min_leaf must be >= 1")
        if self.seed < 0:
            raise ParameterError("seed must be non-negative")
        if self.max_depth is not None and self.max_depth < 0:
            raise ParameterError("max_depth must be None or >= 0")
        return self


@dataclass
class Tree:
    """Flat node arrays in preorder; feature == -1 marks a leaf."""

    feature: np.ndarray  # int32
    threshold: np.ndarray  # float64 (nan at leaves)
    left: np.ndarray  # int32 (-1 at leaves)
    right: np.ndarray  # int32
    counts: np.ndarray  # (n_nodes, C) int64 class counts of the node's sample
    leaf_class: np.ndarray  # int32 (-1 at internal nodes)


@dataclass
class ForestModel:
    trees: list
    classes: list
    oob_error: float
    params: ForestParams
    n_features: int
    feature_importances: np.ndarray | None = field(default=None, repr=False)


def gini_cost(counts, n):
    """Weighted impurity contribution of one child: n - sum(c^2)/n."""
    s = float(np.sum(np.asarray(counts, dtype=np.float64) ** 2))
    return n - s / n


def best_split(X, idx, y_codes, features, n_classes: int, min_leaf: int = 1):
    """Exhaustive Gini scan over the given features at one node.

    Thresholds are midpoints of consecutive distinct sorted values. Returns
    (cost, feature, threshold) minimizing the summed child impurity
    (nL - SL/nL) + (nR - SR/nR); ties go to the lower feature index, then the
    lower threshold. None when no admissible split exists.
    """
    n = len(idx)
    yn = y_codes[idx]
    best = None
    for f in np.sort(np.asarray(features)):
        v = X[idx, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        ys = yn[order]
        onehot = np.zeros((n, n_classes), dtype=np.int64)
        onehot[np.arange(n), ys] = 1
        cum = np.cumsum(onehot, axis=0)
        pos = np.nonzero(vs[:-1] < vs[1:])[0]
        if min_leaf > 1:
            pos = pos[(pos + 1 >= min_leaf) & (n - pos - 1 >= min_leaf)]
        if len(pos) == 0:
            continue
        n_left = (pos + 1).astype(np.float64)
        n_right = n - n_left
        cum_left = cum[pos].astype(np.float64)
        sum_sq_left = np.sum(cum_left**2, axis=1)
        cum_right = cum[-1].astype(np.float64)[None, :] - cum_left
        sum_sq_right = np.sum(cum_right**2, axis=1)
        cost = (n_left - sum_sq_left / n_left) + (n_right - sum_sq_right / n_right)
        j = int(np.argmin(cost))
        if best is None or cost[j] < best[0]:
            thr = (vs[pos[j]] + vs[pos[j] + 1]) / 2.0
            best = (float(cost[j]), int(f), float(thr))
    return best


def _grow_tree(X, y_codes, n_classes, tree_index, params, mtry):
    n, d = X.shape
    rng = np.random.default_rng(np.random.SeedSequence([params.seed, tree_index]))
    boot = rng.integers(0, n, n)
    in_bag = np.bincount(boot, minlength=n) > 0

    feature, threshold, left, right, counts, leaf_class = [], [], [], [], [], []
    importances = np.zeros(d)
    stack = [(boot, 0, -1, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        slot = len(feature)
        if parent >= 0:
            if is_left:
                left[parent] = slot
            else:
                right[parent] = slot
        cnt = np.bincount(y_codes[idx], minlength=n_classes)

        split = None
        pure = np.count_nonzero(cnt) <= 1
        too_small = len(idx) < 2 * params.min_leaf
        too_deep = params.max_depth is not None and depth >= params.max_depth
        if not (pure or too_small or too_deep):
            feats = rng.choice(d, size=mtry, replace=False)
            cand = best_split(X, idx, y_codes, feats, n_classes, params.min_leaf)
            if cand is not None:
                parent_cost = gini_cost(cnt, float(len(idx)))
                if cand[0] < parent_cost:
                    split = cand
                    importances[cand[1]] += parent_cost - cand[0]

        if split is None:
            feature.append(-1)
            threshold.append(float("nan"))
            left.append(-1)
            right.append(-1)
            counts.append(cnt)
            leaf_class.append(int(np.argmax(cnt)))
        else:
            _, f, thr = split
            feature.append(f)
            threshold.append(thr)
            left.append(-1)
            right.append(-1)
            counts.append(cnt)
            leaf_class.append(-1)
            mask = X[idx, f] <= thr
            stack.append((idx[~mask], depth + 1, slot, False))
            stack.append((idx[mask], depth + 1, slot, True))

    tree = Tree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        counts=np.array(counts, dtype=np.int64),
        leaf_class=np.array(leaf_class, dtype=np.int32),
    )
    return tree, in_bag, importances


def _tree_apply(tree: Tree, X) -> np.ndarray:
    """Leaf vote (class index) of one tree for every row of X."""
    node = np.zeros(len(X), dtype=np.int64)
    while True:
        feats = tree.feature[node]
        internal = feats >= 0
        if not internal.any():
            return tree.leaf_class[node]
        rows = np.nonzero(internal)[0]
        cur = node[rows]
        go_left = X[rows, feats[rows]] <= tree.threshold[cur]
        node[rows] = np.where(go_left, tree.left[cur], tree.right[cur])


def train_forest(X, y, params: ForestParams, classes=None, n_jobs: int = 1) -> ForestModel:
    """Fit a forest on (X, y). `classes` fixes the class index order; by
    default it is the sorted unique labels. Training with n_jobs > 1 is
    bit-identical to sequential training."""
    params = params.validate()
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ParameterError(f"X must be 2-D, got shape {X.shape}")
    y = list(y)
    if len(X) != len(y):
        raise ParameterError(f"X has {len(X)} rows but y has {len(y)} labels")
    if len(X) < 2:
        raise ParameterError("need at least 2 training examples")
    if classes is None:
        classes = sorted(set(y))
    class_index = {c: i for i, c in enumerate(classes)}
    unknown = [lab for lab in y if lab not in class_index]
    if unknown:
        raise ParameterError(f"labels not in class list: {sorted(set(map(str, unknown)))[:5]}")
    y_codes = np.array([class_index[lab] for lab in y], dtype=np.int64)
    if len(set(y_codes)) < 2:
        warnings.warn("training data contains a single class; forest is degenerate")

    n, d = X.shape
    mtry = params.mtry if params.mtry is not None else max(1, int(math.floor(math.sqrt(d))))
    if not 1 <= mtry <= d:
        raise ParameterError(f"mtry must be in [1, {d}], got {mtry}")
    n_classes = len(classes)

    def fit_one(t):
        return _grow_tree(X, y_codes, n_classes, t, params, mtry)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            fitted = list(pool.map(fit_one, range(params.n_trees)))
    else:
        fitted = [fit_one(t) for t in range(params.n_trees)]

    trees = [t for t, _, _ in fitted]
    votes = np.zeros((n, n_classes), dtype=np.int64)
    for tree, in_bag, _ in fitted:
        oob_rows = np.nonzero(~in_bag)[0]
        if len(oob_rows) == 0:
            continue
        preds = _tree_apply(tree, X[oob_rows])
        np.add.at(votes, (oob_rows, preds), 1)
    voted = votes.sum(axis=1) > 0
    if voted.any():
        oob_pred = np.argmax(votes[voted], axis=1)
        oob_error = float(np.mean(oob_pred != y_codes[voted]))
    else:
        oob_error = 0.0

    total_imp = np.sum([imp for _, _, imp in fitted], axis=0)
    norm = total_imp.sum()
    return ForestModel(
        trees=trees,
        classes=list(classes),
        oob_error=oob_error,
        params=params,
        n_features=d,
        feature_importances=total_imp / norm if norm > 0 else total_imp,
    )


def _check_features(model: ForestModel, X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise ParameterError(
            f"feature dimension {X.shape[1]} does not match training dimension {model.n_features}"
        )
    return X


def predict_proba(model: ForestModel, X) -> np.ndarray:
    """Per-class vote fractions, shape (n, n_classes); rows sum to 1."""
    X = _check_features(model, X)
    votes = np.zeros((len(X), len(model.classes)), dtype=np.int64)
    for tree in model.trees:
        preds = _tree_apply(tree, X)
        votes[np.arange(len(X)), preds] += 1
    return votes / float(len(model.trees))


def predict(model: ForestModel, X) -> list:
    """Majority-vote labels; ties go to the lower class index."""
    proba = predict_proba(model, X)
    return [model.classes[i] for i in np.argmax(proba, axis=1)]


# --- model file ---------------------------------------------------------------


def save_forest(model: ForestModel, path) -> None:
    with open(Path(path), "wb") as fh:
        fh.write(_FOREST_MAGIC)
        p = model.params
        max_depth = -1 if p.max_depth is None else p.max_depth
        mtry = -1 if p.mtry is None else p.mtry
        fh.write(
            struct.pack(
                "<IIiiiQdI",
                _FOREST_VERSION,
                p.n_trees,
                mtry,
                p.min_leaf,
                max_depth,
                p.seed,
                model.oob_error,
                model.n_features,
            )
        )
        fh.write(struct.pack("<I", len(model.classes)))
        for c in model.classes:
            b = str(c).encode("utf-8")
            fh.write(struct.pack("<I", len(b)))
            fh.write(b)
        fh.write(struct.pack("<I", len(model.trees)))
        for tree in model.trees:
            n_nodes = len(tree.feature)
            fh.write(struct.pack("<I", n_nodes))
            fh.write(np.ascontiguousarray(tree.feature, dtype="<i4").tobytes())
            fh.write(np.ascontiguousarray(tree.threshold, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(tree.left, dtype="<i4").tobytes())
            fh.write(np.ascontiguousarray(tree.right, dtype="<i4").tobytes())
            fh.write(np.ascontiguousarray(tree.leaf_class, dtype="<i4").tobytes())
            fh.write(np.ascontiguousarray(tree.counts, dtype="<i8").tobytes())


def load_forest(path) -> ForestModel:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _FOREST_MAGIC:
            raise ParseError(f"bad magic {magic!r}, expected {_FOREST_MAGIC!r}", path=path)
        version, n_trees, mtry, min_leaf, max_depth, seed, oob_error, n_features = struct.unpack(
            "<IIiiiQdI", fh.read(struct.calcsize("<IIiiiQdI"))
        )
        if version != _FOREST_VERSION:
            raise ParseError(f"unsupported version {version}", path=path)
        (n_classes,) = struct.unpack("<I", fh.read(4))
        classes = []
        for _ in range(n_classes):
            (ln,) = struct.unpack("<I", fh.read(4))
            classes.append(fh.read(ln).decode("utf-8"))
        (n_stored,) = struct.unpack("<I", fh.read(4))
        if n_stored != n_trees:
            raise ParseError(f"tree count {n_stored} does not match params {n_trees}", path=path)
        trees = []
        for _ in range(n_trees):
            (n_nodes,) = struct.unpack("<I", fh.read(4))
            feature = np.frombuffer(fh.read(4 * n_nodes), dtype="<i4")
            threshold = np.frombuffer(fh.read(8 * n_nodes), dtype="<f8")
            left = np.frombuffer(fh.read(4 * n_nodes), dtype="<i4")
            right = np.frombuffer(fh.read(4 * n_nodes), dtype="<i4")
            leaf_class = np.frombuffer(fh.read(4 * n_nodes), dtype="<i4")
            counts = np.frombuffer(fh.read(8 * n_nodes * n_classes), dtype="<i8").reshape(
                n_nodes, n_classes
            )
            trees.append(
                Tree(
                    feature=feature.copy(),
                    threshold=threshold.copy(),
                    left=left.copy(),
                    right=right.copy(),
                    counts=counts.copy(),
                    leaf_class=leaf_class.copy(),
                )
            )
    params = ForestParams(
        n_trees=n_trees,
        mtry=None if mtry < 0 else mtry,
        min_leaf=min_leaf,
        max_depth=None if max_depth < 0 else max_depth,
        seed=seed,
    )
    return ForestModel(
        trees=trees,
        classes=classes,
        oob_error=oob_error,
        params=params,
        n_features=n_features,
    )
