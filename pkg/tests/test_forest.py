import numpy as np
import pytest

from slidemap.errors import CorruptFileError, InputError, SchemaError, TrainingError
from slidemap.features import WINTER_ONLY, FeatureStack
from slidemap.forest import (
    ForestParams,
    classify_stack,
    load_model,
    predict,
    predict_matrix,
    save_model,
    train_forest,
)
from slidemap.raster import GridHeader, Raster
from slidemap.sampling import TrainingMatrix


def two_clusters(n_per_class=500, sep=3.0, seed=0, p=2):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 1.0, size=(n_per_class, p))
    b = rng.normal(sep, 1.0, size=(n_per_class, p))
    X = np.vstack([a, b])
    y = np.concatenate([np.zeros(n_per_class, np.int64), np.ones(n_per_class, np.int64)])
    order = rng.permutation(X.shape[0])
    return TrainingMatrix(
        features=X[order],
        labels=y[order],
        feature_names=tuple(f"f{i}" for i in range(p)),
    )


def nearest_centroid_accuracy(tm):
    mu0 = tm.features[tm.labels == 0].mean(axis=0)
    mu1 = tm.features[tm.labels == 1].mean(axis=0)
    d0 = ((tm.features - mu0) ** 2).sum(axis=1)
    d1 = ((tm.features - mu1) ** 2).sum(axis=1)
    return ((d1 < d0).astype(np.int64) == tm.labels).mean()


class TestTrainForest:
    def test_separable_clusters_high_oob(self):
        tm = two_clusters()
        model = train_forest(tm, ForestParams(n_trees=100, seed=1))
        oracle = nearest_centroid_accuracy(tm)
        assert oracle > 0.95  # the problem really is separable
        assert model.oob_accuracy >= 0.95

    def test_exact_feature_dominates_importance(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(400, 5))
        y = (X[:, 0] > 0).astype(np.int64)
        tm = TrainingMatrix(X, y, tuple(f"f{i}" for i in range(5)))
        model = train_forest(tm, ForestParams(n_trees=60, seed=2))
        assert model.importance[0] > model.importance[1:].max()

    def test_identical_rows_mixed_labels_degenerate(self):
        X = np.ones((200, 3))
        y = np.array([0] * 130 + [1] * 70, dtype=np.int64)
        tm = TrainingMatrix(X, y, ("a", "b", "c"))
        model = train_forest(tm, ForestParams(n_trees=50, seed=3))
        assert all(t.n_nodes == 1 for t in model.trees)
        # No informative split exists; accuracy is the majority frequency.
        assert model.oob_accuracy == pytest.approx(0.65, abs=0.05)

    def test_single_class_is_training_error(self):
        tm = TrainingMatrix(np.random.default_rng(0).normal(size=(10, 2)),
                            np.zeros(10, np.int64), ("a", "b"))
        with pytest.raises(TrainingError):
            train_forest(tm)

    def test_too_few_rows(self):
        tm = TrainingMatrix(np.ones((1, 2)), np.zeros(1, np.int64), ("a", "b"))
        with pytest.raises(TrainingError):
            train_forest(tm)

    def test_label_randomized_oob_near_half(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(1000, 6))
        y = rng.integers(0, 2, 1000).astype(np.int64)
        tm = TrainingMatrix(X, y, tuple(f"f{i}" for i in range(6)))
        model = train_forest(tm, ForestParams(n_trees=80, seed=5))
        assert 0.4 <= model.oob_accuracy <= 0.6

    def test_deterministic_across_worker_counts(self):
        tm = two_clusters(n_per_class=120, seed=9)
        models = [
            train_forest(tm, ForestParams(n_trees=12, seed=11), workers=w)
            for w in (1, 3)
        ]
        a, b = models
        assert a.oob_accuracy == b.oob_accuracy
        np.testing.assert_array_equal(a.importance, b.importance)
        for ta, tb in zip(a.trees, b.trees):
            np.testing.assert_array_equal(ta.feature, tb.feature)
            np.testing.assert_array_equal(ta.threshold, tb.threshold)
            np.testing.assert_array_equal(ta.votes, tb.votes)

    def test_row_permutation_with_compensating_indices(self):
        # Growing from the same multiset of bootstrap rows, in the same
        # order, yields the identical tree regardless of row layout.
        from slidemap.forest import _grow_from, _tree_rng

        tm = two_clusters(n_per_class=80, seed=13)
        X, y = tm.features, tm.labels.astype(np.int8)
        n = X.shape[0]
        perm = np.random.default_rng(0).permutation(n)
        inv = np.argsort(perm)
        X2, y2 = np.ascontiguousarray(X[perm]), np.ascontiguousarray(y[perm])

        rng = _tree_rng(17, 0)
        boot = rng.integers(0, n, n, dtype=np.int64)
        rand = rng.random((2 * n + 1) * 2)
        tree_a, imp_a = _grow_from(X, y, 2, boot, rand, 2, 1, None)
        tree_b, imp_b = _grow_from(X2, y2, 2, inv[boot], rand, 2, 1, None)

        np.testing.assert_array_equal(tree_a.feature, tree_b.feature)
        np.testing.assert_array_equal(tree_a.threshold, tree_b.threshold)
        np.testing.assert_array_equal(tree_a.votes, tree_b.votes)
        np.testing.assert_array_equal(imp_a, imp_b)


class TestPredict:
    def test_unanimous_vote(self):
        tm = two_clusters(n_per_class=100, sep=6.0, seed=2)
        model = train_forest(tm, ForestParams(n_trees=30, seed=1))
        label, frac = predict(model, tm.features[tm.labels == 1][0])
        assert label == 1 and frac == 1.0

    def test_tie_breaks_toward_class_zero(self):
        tm = two_clusters(n_per_class=50, sep=0.0, seed=3)
        model = train_forest(tm, ForestParams(n_trees=2, seed=8))
        votes_seen = set()
        rng = np.random.default_rng(1)
        for row in rng.normal(size=(200, 2)):
            label, frac = predict(model, row)
            if frac == 0.5:
                assert label == 0
                votes_seen.add("tie")
        # With 2 trees on noise, ties occur.
        assert "tie" in votes_seen

    def test_vote_fraction_at_least_half(self):
        tm = two_clusters(n_per_class=60, sep=1.0, seed=5)
        model = train_forest(tm, ForestParams(n_trees=21, seed=2))
        rng = np.random.default_rng(0)
        _, fracs = predict_matrix(model, rng.normal(size=(100, 2)))
        assert (fracs >= 0.5).all()

    def test_wrong_length_rejected(self):
        tm = two_clusters(n_per_class=30)
        model = train_forest(tm, ForestParams(n_trees=5, seed=0))
        with pytest.raises(InputError):
            predict(model, [1.0, 2.0, 3.0])

    def test_nan_row_rejected(self):
        tm = two_clusters(n_per_class=30)
        model = train_forest(tm, ForestParams(n_trees=5, seed=0))
        with pytest.raises(InputError):
            predict(model, [1.0, np.nan])


def tiny_stack(h=6, w=6, p_values=None):
    hdr = GridHeader(width=w, height=h, origin_x=0.0, origin_y=h * 30.0,
                     pixel_size=30.0, crs_label="local")
    layers = []
    rng = np.random.default_rng(0)
    names = WINTER_ONLY.layer_names
    for i, name in enumerate(names):
        vals = rng.normal(0.3, 0.1, size=(h, w)).astype(np.float32)
        layers.append((name, Raster(hdr, vals)))
    return FeatureStack(variant=WINTER_ONLY, year=2005, layers=layers)


class TestClassifyStack:
    def _model(self, names):
        rng = np.random.default_rng(0)
        X = rng.normal(0.3, 0.1, size=(300, len(names)))
        y = (X[:, 0] > 0.3).astype(np.int64)
        tm = TrainingMatrix(X, y, tuple(names))
        return train_forest(tm, ForestParams(n_trees=40, seed=6))

    def test_pointwise_consistency(self):
        stack = tiny_stack()
        model = self._model(stack.layer_names)
        result = classify_stack(model, stack)
        matrix = stack.matrix()
        labels, _ = predict_matrix(model, matrix)
        np.testing.assert_array_equal(result.values.ravel(), labels.astype(np.float32))

    def test_nodata_pixel_propagates(self):
        stack = tiny_stack()
        name, rast = stack.layers[0]
        vals = rast.values.copy()
        vals[2, 3] = np.nan
        stack.layers[0] = (name, Raster(rast.header, vals))
        model = self._model(stack.layer_names)
        out = classify_stack(model, stack)
        assert np.isnan(out.values[2, 3])
        assert np.isfinite(out.values[0, 0])

    def test_repeat_classification_identical(self):
        stack = tiny_stack()
        model = self._model(stack.layer_names)
        a = classify_stack(model, stack)
        b = classify_stack(model, stack)
        assert a.values.tobytes() == b.values.tobytes()

    def test_layer_name_mismatch(self):
        stack = tiny_stack()
        model = self._model(stack.layer_names)
        model.feature_names = tuple("x" + n for n in model.feature_names)
        with pytest.raises(SchemaError):
            classify_stack(model, stack)

    def test_worker_counts_identical_maps(self):
        stack = tiny_stack(h=10, w=10)
        model = self._model(stack.layer_names)
        maps = [classify_stack(model, stack, workers=w).values.tobytes() for w in (1, 2, 4)]
        assert maps[0] == maps[1] == maps[2]


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        tm = two_clusters(n_per_class=60, seed=21)
        model = train_forest(tm, ForestParams(n_trees=15, seed=4))
        save_model(model, tmp_path / "m.bin")
        back = load_model(tmp_path / "m.bin")
        assert back.feature_names == model.feature_names
        assert back.oob_accuracy == model.oob_accuracy
        np.testing.assert_array_equal(back.classes, model.classes)
        np.testing.assert_allclose(back.importance, model.importance)
        rng = np.random.default_rng(2)
        X = rng.normal(size=(50, 2))
        la, fa = predict_matrix(model, X)
        lb, fb = predict_matrix(back, X)
        np.testing.assert_array_equal(la, lb)
        np.testing.assert_array_equal(fa, fb)

    def test_truncated_file_rejected(self, tmp_path):
        tm = two_clusters(n_per_class=40, seed=22)
        model = train_forest(tm, ForestParams(n_trees=4, seed=4))
        save_model(model, tmp_path / "m.bin")
        raw = (tmp_path / "m.bin").read_bytes()
        (tmp_path / "m.bin").write_bytes(raw[:-20])
        with pytest.raises(CorruptFileError):
            load_model(tmp_path / "m.bin")

    def test_corrupt_children_rejected(self, tmp_path):
        tm = two_clusters(n_per_class=40, seed=23)
        model = train_forest(tm, ForestParams(n_trees=2, seed=4))
        # Point a child offset out of range.
        model.trees[0].left[model.trees[0].feature >= 0] = 10_000
        save_model(model, tmp_path / "m.bin")
        with pytest.raises(CorruptFileError):
            load_model(tmp_path / "m.bin")
