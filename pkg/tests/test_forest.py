import numpy as np
import pytest

from ecgfusion.forest import (ForestConfig, balanced_weights, fit_forest,
                              load_forest, predict_proba, save_forest)
from ecgfusion.metrics import auroc


def threshold_data(n=500, p=4, seed=0):
    """Integer-valued features: y = [x0 > 0] is exactly learnable."""
    rng = np.random.default_rng(seed)
    X = rng.integers(-100, 101, size=(n, p)).astype(float)
    y = (X[:, 0] > 0).astype(int)
    return X, y


class TestFit:
    def test_separable_training_accuracy(self):
        X, y = threshold_data()
        model = fit_forest(X, y, ForestConfig(n_trees=20, seed=1))
        pred = predict_proba(model, X)[:, 1] > 0.5
        assert (pred.astype(int) == y).mean() == 1.0

    def test_depth1_xor_bound(self):
        # brute-force over stumps: XOR admits at most 0.75 accuracy
        rng = np.random.default_rng(2)
        base = np.array([[-1, -1], [-1, 1], [1, -1], [1, 1]], dtype=float)
        X = np.repeat(base, 25, axis=0) + rng.normal(0, 0.01, (100, 2))
        y = (np.sign(X[:, 0]) != np.sign(X[:, 1])).astype(int)
        model = fit_forest(X, y, ForestConfig(n_trees=1, max_depth=1, seed=3))
        acc = ((predict_proba(model, X)[:, 1] > 0.5).astype(int) == y).mean()
        assert acc <= 0.75

    def test_balanced_weights_formula(self):
        y = np.r_[np.zeros(900, int), np.ones(100, int)]
        w = balanced_weights(y)
        assert w[0] == pytest.approx(1000 / (2 * 900))
        assert w[1] == pytest.approx(5.0)

    def test_single_class_rejected(self):
        X = np.random.default_rng(0).normal(size=(20, 3))
        with pytest.raises(ValueError, match="single-class"):
            fit_forest(X, np.zeros(20, int), ForestConfig(n_trees=2))

    def test_empty_matrix_rejected(self):
        with pytest.raises(ValueError):
            fit_forest(np.zeros((0, 3)), np.zeros(0), ForestConfig())

    def test_nonfinite_rejected(self):
        X = np.ones((10, 2))
        X[0, 0] = np.nan
        with pytest.raises(ValueError, match="imputed"):
            fit_forest(X, np.r_[np.zeros(5, int), np.ones(5, int)],
                       ForestConfig(n_trees=1))

    def test_seeded_determinism(self):
        X, y = threshold_data(seed=4)
        a = fit_forest(X, y, ForestConfig(n_trees=10, seed=9))
        b = fit_forest(X, y, ForestConfig(n_trees=10, seed=9))
        assert np.array_equal(predict_proba(a, X), predict_proba(b, X))
        c = fit_forest(X, y, ForestConfig(n_trees=10, seed=10))
        assert not np.array_equal(predict_proba(a, X), predict_proba(c, X))

    def test_split_features_within_selected_set(self):
        X, y = threshold_data(p=6)
        model = fit_forest(X, y, ForestConfig(n_trees=5, seed=0))
        for tree in model.trees:
            used = tree.feature[tree.feature >= 0]
            assert used.size == 0 or (used < model.n_features).all()


class TestPredict:
    def test_memorization_single_tree(self):
        # distinct integer rows; a fully-grown tree trained without
        # bootstrap variance memorizes rows in its sample; use n small and
        # check rows that appear in the bootstrap
        rng = np.random.default_rng(5)
        X = rng.permutation(200).reshape(50, 4).astype(float)
        y = rng.integers(0, 2, 50)
        model = fit_forest(X, y, ForestConfig(n_trees=1, seed=6,
                                              min_samples_leaf=1))
        proba = predict_proba(model, X)
        ss = np.random.SeedSequence(6).spawn(1)[0]
        boot = np.random.Generator(np.random.PCG64(ss)).integers(0, 50, 50)
        for i in set(boot.tolist()):
            assert proba[i, y[i]] == 1.0

    def test_rows_sum_to_one(self):
        X, y = threshold_data()
        model = fit_forest(X, y, ForestConfig(n_trees=7, seed=0))
        proba = predict_proba(model, X)
        assert np.allclose(proba.sum(axis=1), 1.0)
        assert (proba >= 0).all()

    def test_averaging_over_trees(self):
        X, y = threshold_data(n=100)
        model = fit_forest(X, y, ForestConfig(n_trees=2, seed=1))
        full = predict_proba(model, X)
        parts = []
        for tree in model.trees:
            solo = type(model)(config=model.config, trees=[tree],
                               n_features=model.n_features,
                               classes=model.classes,
                               class_weights_used=model.class_weights_used)
            parts.append(predict_proba(solo, X))
        assert np.allclose(full, (parts[0] + parts[1]) / 2)

    def test_constant_regression_target(self):
        X = np.random.default_rng(0).normal(size=(40, 3))
        y = np.full(40, 3.25)
        model = fit_forest(X, y, ForestConfig(
            n_trees=4, split_criterion="squared_error", seed=2))
        assert np.allclose(predict_proba(model, X), 3.25)

    def test_width_mismatch(self):
        X, y = threshold_data()
        model = fit_forest(X, y, ForestConfig(n_trees=2, seed=0))
        with pytest.raises(ValueError, match="feature columns"):
            predict_proba(model, X[:, :2])


class TestBehaviour:
    def test_ensemble_stability(self):
        # separable task: 100 trees never much worse than 1 tree
        gaps = []
        for seed in range(5):
            X, y = threshold_data(n=400, seed=20 + seed)
            Xv, yv = threshold_data(n=200, seed=120 + seed)
            acc = {}
            for n_trees in (1, 100):
                m = fit_forest(X, y, ForestConfig(n_trees=n_trees, seed=seed))
                acc[n_trees] = ((predict_proba(m, Xv)[:, 1] > 0.5).astype(int)
                                == yv).mean()
            gaps.append(acc[100] - acc[1])
        assert np.median(gaps) >= -0.02

    def test_balanced_weights_help_minority_recall(self):
        recalls = {"balanced": [], "none": []}
        for seed in range(5):
            rng = np.random.default_rng(200 + seed)
            n = 1000
            y = (rng.random(n) < 0.05).astype(int)
            X = rng.normal(size=(n, 5))
            X[:, 0] += 1.2 * y            # weak, overlapping signal
            Xv = rng.normal(size=(400, 5))
            yv = (rng.random(400) < 0.05).astype(int)
            Xv[:, 0] += 1.2 * yv
            for cw in ("balanced", None):
                m = fit_forest(X, y, ForestConfig(
                    n_trees=30, class_weights=cw, min_samples_leaf=5,
                    seed=seed))
                pred = predict_proba(m, Xv)[:, 1] > 0.5
                tp = np.sum(pred & (yv == 1))
                recalls["balanced" if cw else "none"].append(
                    tp / max(1, yv.sum()))
        assert (np.median(recalls["balanced"])
                >= np.median(recalls["none"]))

    def test_regression_signal(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(800, 6))
        y = 2.0 * X[:, 0] - X[:, 1] + rng.normal(0, 0.3, 800)
        m = fit_forest(X[:600], y[:600], ForestConfig(
            n_trees=40, split_criterion="squared_error",
            min_samples_leaf=2, seed=0))
        pred = predict_proba(m, X[600:])
        ss_res = np.sum((y[600:] - pred) ** 2)
        ss_tot = np.sum((y[600:] - y[600:].mean()) ** 2)
        assert 1 - ss_res / ss_tot > 0.7

    def test_absolute_error_criterion_runs(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(200, 4))
        y = X[:, 0] + rng.normal(0, 0.2, 200)
        m = fit_forest(X, y, ForestConfig(
            n_trees=5, split_criterion="absolute_error",
            min_samples_leaf=5, max_bins=32, seed=1))
        pred = predict_proba(m, X)
        assert np.corrcoef(pred, y)[0, 1] > 0.8

    def test_entropy_criterion(self):
        X, y = threshold_data(seed=30)
        m = fit_forest(X, y, ForestConfig(n_trees=10,
                                          split_criterion="entropy", seed=2))
        assert auroc(predict_proba(m, X)[:, 1], y) == 1.0


class TestPersistence:
    def test_json_roundtrip(self, tmp_path):
        X, y = threshold_data(n=150)
        model = fit_forest(X, y, ForestConfig(n_trees=5, seed=3),
                           column_ids=[f"c{j}" for j in range(X.shape[1])])
        path = save_forest(model, tmp_path / "rf.json")
        back = load_forest(path)
        assert np.array_equal(predict_proba(model, X), predict_proba(back, X))
        assert back.column_ids == model.column_ids
        assert back.config == model.config

    def test_leaf_distributions_sum_to_one(self):
        X, y = threshold_data(n=200)
        model = fit_forest(X, y, ForestConfig(n_trees=3, seed=4,
                                              class_weights="balanced"))
        for tree in model.trees:
            leaves = tree.value[tree.feature < 0]
            assert np.allclose(leaves.sum(axis=1), 1.0)
