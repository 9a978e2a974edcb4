import json

import numpy as np
import pytest

from igengage.cart import (
    Hyperparams,
    feature_importance,
    fit_tree,
    render_tree_text,
)


def xor_data(copies=5):
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * copies, dtype=float)
    y = np.array([0, 1, 1, 0] * copies, dtype=np.int8)
    return X, y


class TestFitTree:
    def test_separable_single_split(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0], [6.0], [7.0], [8.0], [9.0]])
        y = np.array([0, 0, 0, 0, 1, 1, 1, 1], np.int8)
        model = fit_tree(X, y, Hyperparams())
        assert model.threshold[0] == 5.0  # midpoint of the straddling values
        assert (model.predict(X) == y).all()
        assert model.n_nodes == 3

    def test_max_depth_one_is_a_stump(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(100, 3))
        y = (X[:, 0] + 0.5 * rng.normal(size=100) > 0).astype(np.int8)
        model = fit_tree(X, y, Hyperparams(max_depth=1))
        assert model.n_nodes <= 3

    def test_max_depth_zero_forbidden(self):
        with pytest.raises(ValueError):
            Hyperparams(max_depth=0)

    def test_xor_depth_2(self):
        X, y = xor_data()
        model = fit_tree(X, y, Hyperparams(max_depth=2))
        assert (model.predict(X) == y).mean() == 1.0

    def test_both_classes_required(self):
        X = np.zeros((4, 2))
        with pytest.raises(ValueError):
            fit_tree(X, np.zeros(4, np.int8), Hyperparams())

    def test_min_samples_leaf_respected(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(60, 4))
        y = (X[:, 1] > 0).astype(np.int8)
        model = fit_tree(X, y, Hyperparams(min_samples_leaf=10))
        for leaf in model.leaves():
            assert model.class_counts[leaf].sum() >= 10

    def test_deterministic_refit(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(200, 6))
        y = (X[:, 3] > 0.2).astype(np.int8)
        a = fit_tree(X, y, Hyperparams(max_depth=6))
        b = fit_tree(X, y, Hyperparams(max_depth=6))
        assert np.array_equal(a.feature_index, b.feature_index)
        assert np.array_equal(a.threshold, b.threshold, equal_nan=True)

    def test_tie_break_prefers_lowest_feature(self):
        # duplicate column: both splits have equal gain, feature 0 must win
        col = np.array([1.0, 2.0, 3.0, 4.0])
        X = np.column_stack([col, col])
        y = np.array([0, 0, 1, 1], np.int8)
        model = fit_tree(X, y, Hyperparams())
        assert model.feature_index[0] == 0

    def test_agrees_with_sklearn_predictions(self):
        sktree = pytest.importorskip("sklearn.tree")
        rng = np.random.default_rng(3)
        for trial in range(5):
            X = rng.normal(size=(300, 5))
            y = (X[:, 2] + 0.3 * rng.normal(size=300) > 0).astype(np.int8)
            hp = Hyperparams(criterion="gini", max_depth=4, min_samples_leaf=5)
            mine = fit_tree(X, y, hp)
            ref = sktree.DecisionTreeClassifier(
                criterion="gini", max_depth=4, min_samples_leaf=5, random_state=0
            ).fit(X, y)
            # equal-gain ties may resolve differently; quality must match
            assert (mine.predict(X) == ref.predict(X)).mean() > 0.95
            assert (mine.predict(X) == y).mean() == (ref.predict(X) == y).mean()

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(250, 4))
        y = ((X[:, 0] > 0.3) & (X[:, 1] < 0.5)).astype(np.int8)
        X_test = rng.normal(size=(80, 4))
        hp = Hyperparams(max_depth=5)
        base = fit_tree(X, y, hp).predict(X_test)

        def warp(M):
            W = M.copy()
            W[:, 0] = np.exp(M[:, 0])
            W[:, 1] = M[:, 1] ** 3
            W[:, 2] = np.arctan(M[:, 2])
            return W

        warped = fit_tree(warp(X), y, hp).predict(warp(X_test))
        assert np.array_equal(base, warped)

    def test_routing_determinism(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(150, 3))
        y = (X[:, 0] > 0).astype(np.int8)
        model = fit_tree(X, y, Hyperparams())
        rows = rng.normal(size=(40, 3))
        assert np.array_equal(model.apply(rows), model.apply(rows))

    def test_children_partition_parent(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(200, 4))
        y = (X[:, 1] + 0.5 * rng.normal(size=200) > 0).astype(np.int8)
        model = fit_tree(X, y, Hyperparams(max_depth=6))
        for node in range(model.n_nodes):
            if model.is_leaf(node):
                continue
            left, right = model.left[node], model.right[node]
            assert (
                model.class_counts[node].sum()
                == model.class_counts[left].sum() + model.class_counts[right].sum()
            )


class TestBalancedWeights:
    def test_balanced_shifts_leaf_votes(self):
        # 90/10 imbalance in a mixed region: balanced weighting should let the
        # minority win leaves it dominates after reweighting
        rng = np.random.default_rng(7)
        X = rng.normal(size=(300, 2))
        y = (rng.random(300) < 0.1).astype(np.int8)
        uniform = fit_tree(X, y, Hyperparams(max_depth=3))
        balanced = fit_tree(X, y, Hyperparams(max_depth=3, class_weight="balanced"))
        assert (balanced.predict(X) == 1).sum() >= (uniform.predict(X) == 1).sum()


class TestImportance:
    def test_single_split_importance(self):
        X = np.array([[1.0, 9.0], [2.0, 8.0], [6.0, 9.5], [7.0, 8.5]])
        y = np.array([0, 0, 1, 1], np.int8)
        model = fit_tree(X, y, Hyperparams())
        ranked = feature_importance(model)
        assert ranked[0] == ("f0", 1.0)
        assert ranked[1][1] == 0.0

    def test_max_is_one(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(300, 6))
        y = ((X[:, 0] + X[:, 4] * 0.5) > 0).astype(np.int8)
        model = fit_tree(X, y, Hyperparams(max_depth=5))
        assert model.importances.max() == 1.0
        assert (model.importances >= 0).all()

    def test_column_permutation_permutes_importances(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(200, 4))
        y = ((X[:, 0] > 0) & (X[:, 2] < 0.3)).astype(np.int8)
        model = fit_tree(X, y, Hyperparams(max_depth=4))
        perm = [2, 0, 3, 1]
        model_p = fit_tree(X[:, perm], y, Hyperparams(max_depth=4))
        assert np.allclose(model_p.importances, model.importances[perm])

    def test_no_split_tree_warns(self):
        X = np.ones((10, 2))
        y = np.array([0] * 5 + [1] * 5, np.int8)
        model = fit_tree(X, y, Hyperparams())  # constant features: no candidates
        with pytest.warns(RuntimeWarning, match="no splits"):
            ranked = feature_importance(model)
        assert all(v == 0.0 for _, v in ranked)


class TestExport:
    def test_json_round_trip_shape(self):
        X = np.array([[1.0], [2.0], [6.0], [7.0]])
        y = np.array([0, 0, 1, 1], np.int8)
        model = fit_tree(X, y, Hyperparams(), feature_names=("n_mentions",))
        doc = model.to_json_dict()
        json.dumps(doc)  # must be serializable
        assert doc["nodes"][0]["feature"] == "n_mentions"
        assert doc["hyperparameters"]["criterion"] == "gini"
        assert doc["importances"]["n_mentions"] == 1.0
        assert len(doc["schema_hash"]) == 16
        leaves = [n for n in doc["nodes"] if n["feature_index"] is None]
        assert {n["predicted_class"] for n in leaves} == {"Low", "High"}

    def test_render_truncates(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(400, 3))
        y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(np.int8)
        model = fit_tree(X, y, Hyperparams(max_depth=6))
        text = render_tree_text(model, max_depth=2)
        assert "subtree truncated" in text
        full = render_tree_text(model)
        assert "subtree truncated" not in full
