import os
import tempfile

import numpy as np
import pytest

from gazeact.core import ParameterError
from gazeact.forest import (
    ForestModel,
    ForestParams,
    Tree,
    best_split,
    load_forest,
    predict,
    predict_proba,
    save_forest,
    train_forest,
)


def brute_force_best_split(X, idx, y, n_classes, min_leaf=1):
    """Literal scan over every (feature, threshold) pair, loops and all."""
    best = None
    for f in range(X.shape[1]):
        values = sorted({float(X[i, f]) for i in idx})
        for a, b in zip(values[:-1], values[1:]):
            thr = (a + b) / 2.0
            left = [i for i in idx if X[i, f] <= thr]
            right = [i for i in idx if X[i, f] > thr]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue

            def side_cost(side):
                counts = [0] * n_classes
                for i in side:
                    counts[y[i]] += 1
                n_side = float(len(side))
                sum_sq = float(sum(c * c for c in counts))
                return n_side - sum_sq / n_side

            cost = side_cost(left) + side_cost(right)
            if best is None or cost < best[0]:
                best = (cost, f, thr)
    return best


def separable_data(rng, n=300, d=8):
    X = rng.random((n, d))
    y = np.where(X[:, 3] > 0.5, "hi", "lo")
    return X, list(y)


def model_bytes(model):
    with tempfile.NamedTemporaryFile(delete=False) as fh:
        path = fh.name
    try:
        save_forest(model, path)
        with open(path, "rb") as fh:
            return fh.read()
    finally:
        os.unlink(path)


class TestBestSplit:
    def test_agrees_with_brute_force_on_random_instances(self):
        rng = np.random.default_rng(0)
        for trial in range(25):
            n = int(rng.integers(5, 51))
            d = int(rng.integers(2, 7))
            n_classes = int(rng.integers(2, 4))
            X = rng.random((n, d))
            y = rng.integers(0, n_classes, n)
            idx = np.arange(n)
            ours = best_split(X, idx, y, np.arange(d), n_classes)
            ref = brute_force_best_split(X, idx, y, n_classes)
            assert (ours is None) == (ref is None)
            if ours is not None:
                assert ours[0] == ref[0]
                assert ours[1] == ref[1]
                assert ours[2] == ref[2]

    def test_agrees_with_brute_force_under_min_leaf(self):
        rng = np.random.default_rng(1)
        for trial in range(10):
            n = int(rng.integers(10, 41))
            X = rng.random((n, 4))
            y = rng.integers(0, 2, n)
            idx = np.arange(n)
            ours = best_split(X, idx, y, np.arange(4), 2, min_leaf=4)
            ref = brute_force_best_split(X, idx, y, 2, min_leaf=4)
            assert (ours is None) == (ref is None)
            if ours is not None:
                assert ours == ref

    def test_constant_features_yield_no_split(self):
        X = np.ones((10, 3))
        y = np.array([0, 1] * 5)
        assert best_split(X, np.arange(10), y, np.arange(3), 2) is None


class TestTrainForest:
    def test_separable_data_interpolated_and_low_oob(self):
        rng = np.random.default_rng(2)
        X, y = separable_data(rng, n=300)
        model = train_forest(X, y, ForestParams(n_trees=60, seed=0))
        assert predict(model, X) == y  # pure fit reproduces its training labels
        assert model.oob_error <= 0.05

    def test_single_class_input_degenerate_with_warning(self):
        X = np.random.default_rng(3).random((20, 4))
        with pytest.warns(UserWarning, match="single class"):
            model = train_forest(X, ["only"] * 20, ForestParams(n_trees=10, seed=0))
        assert predict(model, X) == ["only"] * 20
        assert model.oob_error == 0.0

    def test_same_seed_bit_identical(self):
        rng = np.random.default_rng(4)
        X, y = separable_data(rng, n=120)
        a = train_forest(X, y, ForestParams(n_trees=20, seed=7))
        b = train_forest(X, y, ForestParams(n_trees=20, seed=7))
        assert model_bytes(a) == model_bytes(b)

    def test_concurrent_training_matches_sequential(self):
        rng = np.random.default_rng(5)
        X, y = separable_data(rng, n=150)
        seq = train_forest(X, y, ForestParams(n_trees=16, seed=3), n_jobs=1)
        par = train_forest(X, y, ForestParams(n_trees=16, seed=3), n_jobs=4)
        assert model_bytes(seq) == model_bytes(par)

    def test_size_mismatch_rejected(self):
        with pytest.raises(ParameterError):
            train_forest(np.zeros((5, 3)), ["a"] * 4, ForestParams(n_trees=2))

    def test_oob_error_tracks_held_out_error(self):
        # mixture with real class overlap so error rates are non-trivial
        def mixture(rng, n):
            centers = np.array([[0.0, 0.0], [1.2, 0.0], [0.6, 1.0]])
            y = rng.integers(0, 3, n)
            X = centers[y] + rng.normal(0, 0.55, (n, 2))
            return X, list(y)

        gaps = []
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            X_train, y_train = mixture(rng, 500)
            X_test, y_test = mixture(rng, 500)
            model = train_forest(X_train, y_train, ForestParams(n_trees=30, seed=seed))
            held_out = float(np.mean(np.array(predict(model, X_test)) != np.array(y_test)))
            gaps.append(abs(model.oob_error - held_out))
        assert max(gaps) <= 0.10

    def test_monotone_feature_transform_preserves_predictions(self):
        rng = np.random.default_rng(6)
        X, y = separable_data(rng, n=200, d=5)
        params = ForestParams(n_trees=25, seed=1)
        base = predict(train_forest(X, y, params), X)
        Xt = X.copy()
        Xt[:, 3] = np.exp(3.0 * Xt[:, 3])  # strictly monotone on one feature
        transformed = predict(train_forest(Xt, y, params), Xt)
        assert base == transformed


class TestPrediction:
    def setup_method(self):
        rng = np.random.default_rng(7)
        self.X, self.y = separable_data(rng, n=200)
        self.model = train_forest(self.X, self.y, ForestParams(n_trees=16, seed=0))

    def test_unanimous_vote_gives_fraction_one(self):
        proba = predict_proba(self.model, self.X[:10])
        top = np.max(proba, axis=1)
        assert np.all(top <= 1.0)
        assert np.any(top == 1.0)

    def test_fractions_sum_to_one(self):
        proba = predict_proba(self.model, self.X)
        assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-12)
        # vote counts are integral
        votes = proba * len(self.model.trees)
        assert np.allclose(votes, np.round(votes), atol=1e-9)

    def test_predict_is_argmax_of_proba(self):
        proba = predict_proba(self.model, self.X)
        labels = predict(self.model, self.X)
        assert labels == [self.model.classes[i] for i in np.argmax(proba, axis=1)]

    def test_even_vote_tie_goes_to_lower_class_index(self):
        leaf_a = Tree(
            feature=np.array([-1], dtype=np.int32),
            threshold=np.array([np.nan]),
            left=np.array([-1], dtype=np.int32),
            right=np.array([-1], dtype=np.int32),
            counts=np.array([[5, 0]], dtype=np.int64),
            leaf_class=np.array([0], dtype=np.int32),
        )
        leaf_b = Tree(
            feature=np.array([-1], dtype=np.int32),
            threshold=np.array([np.nan]),
            left=np.array([-1], dtype=np.int32),
            right=np.array([-1], dtype=np.int32),
            counts=np.array([[0, 5]], dtype=np.int64),
            leaf_class=np.array([1], dtype=np.int32),
        )
        model = ForestModel(
            trees=[leaf_a, leaf_b],
            classes=["first", "second"],
            oob_error=0.0,
            params=ForestParams(n_trees=2),
            n_features=3,
        )
        assert predict(model, np.zeros((1, 3))) == ["first"]

    def test_tree_order_does_not_matter(self):
        shuffled = ForestModel(
            trees=list(reversed(self.model.trees)),
            classes=self.model.classes,
            oob_error=self.model.oob_error,
            params=self.model.params,
            n_features=self.model.n_features,
        )
        assert predict(shuffled, self.X) == predict(self.model, self.X)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ParameterError):
            predict(self.model, np.zeros((2, 9)))


class TestForestFile:
    def test_round_trip_preserves_predictions(self, tmp_path):
        rng = np.random.default_rng(8)
        X, y = separable_data(rng, n=150)
        model = train_forest(X, y, ForestParams(n_trees=12, seed=2, max_depth=9))
        path = tmp_path / "forest.bin"
        save_forest(model, path)
        back = load_forest(path)
        assert back.classes == model.classes
        assert back.oob_error == model.oob_error
        assert back.params == model.params
        assert predict(back, X) == predict(model, X)
        assert np.array_equal(predict_proba(back, X), predict_proba(model, X))
