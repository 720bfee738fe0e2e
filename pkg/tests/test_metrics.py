import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ecgfusion.metrics import (MetricValue, auroc, confusion_rates, f1_max,
                               pr_curve_and_auprc, r2_mae)


def pairwise_auroc(scores, labels):
    """Exhaustive O(n^2) oracle: P(pos > neg) with ties counted 1/2."""
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for n in neg:
            wins += 1.0 if p > n else (0.5 if p == n else 0.0)
    return wins / (len(pos) * len(neg))


def sweep_auprc(scores, labels):
    """Brute-force threshold sweep + step integration."""
    thresholds = np.unique(scores)[::-1]
    pts = []
    for t in thresholds:
        pred = scores >= t
        tp = np.sum(pred & (labels == 1))
        fp = np.sum(pred & (labels == 0))
        pts.append((tp / labels.sum(), tp / (tp + fp)))
    area, prev_r = 0.0, 0.0
    for r, p in pts:
        area += (r - prev_r) * p
        prev_r = r
    return area


class TestAuroc:
    def test_worked_example(self):
        assert auroc(np.array([0.1, 0.4, 0.35, 0.8]),
                     np.array([0, 0, 1, 1])) == pytest.approx(0.75)

    def test_perfect(self):
        assert auroc(np.array([0.1, 0.2, 0.8, 0.9]),
                     np.array([0, 0, 1, 1])) == 1.0

    def test_all_ties(self):
        assert auroc(np.full(10, 0.5), np.r_[np.zeros(5), np.ones(5)]) == 0.5

    def test_single_class_raises(self):
        with pytest.raises(ValueError):
            auroc(np.array([0.1, 0.2]), np.array([1, 1]))

    @settings(max_examples=300, deadline=None)
    @given(data=st.data())
    def test_matches_pairwise_oracle(self, data):
        n = data.draw(st.integers(2, 50))
        labels = np.array(data.draw(
            st.lists(st.integers(0, 1), min_size=n, max_size=n)))
        if labels.sum() in (0, n):
            labels[0] = 1 - labels[0]
        scores = np.array(data.draw(st.lists(
            st.floats(0, 1, allow_nan=False, width=32),
            min_size=n, max_size=n)))
        assert auroc(scores, labels) == pytest.approx(
            pairwise_auroc(scores, labels), abs=1e-9)


class TestAuprc:
    def test_perfect_classifier(self):
        scores = np.r_[np.linspace(0.6, 0.9, 20), np.linspace(0.1, 0.4, 30)]
        labels = np.r_[np.ones(20, int), np.zeros(30, int)]
        curve = pr_curve_and_auprc(scores, labels)
        assert curve.auprc >= 0.99

    def test_constant_scores_give_prevalence(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            n = int(rng.integers(20, 200))
            k = int(rng.integers(1, n))
            labels = np.r_[np.ones(k, int), np.zeros(n - k, int)]
            curve = pr_curve_and_auprc(np.full(n, 0.3), labels)
            assert curve.auprc == pytest.approx(k / n, abs=1e-6)

    def test_raw_step_matches_threshold_sweep(self):
        scores = np.array([0.9, 0.8, 0.1])
        labels = np.array([1, 0, 1])
        curve = pr_curve_and_auprc(scores, labels)
        assert curve.auprc_raw == pytest.approx(sweep_auprc(scores, labels),
                                                abs=0.02)

    def test_no_positive_raises(self):
        with pytest.raises(ValueError):
            pr_curve_and_auprc(np.array([0.3, 0.4]), np.array([0, 0]))

    def test_grid_shape(self):
        curve = pr_curve_and_auprc(np.array([0.9, 0.1, 0.5]),
                                   np.array([1, 0, 1]))
        assert curve.recall_grid.shape == (1000,)
        assert curve.precision_grid.shape == (1000,)


class TestF1Max:
    def test_worked_example(self):
        assert f1_max(np.array([0.9, 0.8, 0.1]),
                      np.array([1, 0, 1])) == pytest.approx(0.8)

    def test_perfect(self):
        assert f1_max(np.array([0.9, 0.8, 0.1, 0.2]),
                      np.array([1, 1, 0, 0])) == 1.0

    @settings(max_examples=200, deadline=None)
    @given(data=st.data())
    def test_dominates_fixed_threshold(self, data):
        n = data.draw(st.integers(3, 40))
        labels = np.array(data.draw(
            st.lists(st.integers(0, 1), min_size=n, max_size=n)))
        if labels.sum() == 0:
            labels[0] = 1
        scores = np.array(data.draw(st.lists(
            st.floats(0, 1, allow_nan=False, width=32),
            min_size=n, max_size=n)))
        thr = data.draw(st.floats(0, 1, allow_nan=False, width=32))
        rates = confusion_rates(scores, labels, thr)
        se, ppv = rates["Se"], rates["PPV"]
        if np.isnan(ppv) or se + ppv == 0:
            return
        f1_at_thr = 2 * ppv * se / (ppv + se)
        assert f1_max(scores, labels) >= f1_at_thr - 1e-12


class TestR2Mae:
    def test_identity(self):
        r2, mae = r2_mae(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 3.0]))
        assert r2 == 1.0 and mae == 0.0

    def test_mean_predictor_zero(self):
        t = np.array([10.0, 20.0, 30.0])
        r2, _ = r2_mae(np.full(3, 20.0), t)
        assert r2 == pytest.approx(0.0)

    def test_worked_example(self):
        r2, mae = r2_mae(np.array([12.0, 18.0, 33.0]),
                         np.array([10.0, 20.0, 30.0]))
        assert r2 == pytest.approx(1 - 17 / 200)
        assert mae == pytest.approx(7 / 3)

    def test_constant_truths(self):
        r2, mae = r2_mae(np.array([1.0, 2.0]), np.array([5.0, 5.0]))
        assert r2 is None and mae == pytest.approx(3.5)

    @settings(max_examples=100, deadline=None)
    @given(data=st.data())
    def test_mae_triangle(self, data):
        n = data.draw(st.integers(2, 20))
        arr = st.lists(st.floats(-100, 100, allow_nan=False, width=32),
                       min_size=n, max_size=n)
        a = np.array(data.draw(arr))
        b = np.array(data.draw(arr))
        c = np.array(data.draw(arr))
        mae = lambda x, y: float(np.mean(np.abs(x - y)))
        assert mae(a, c) <= mae(a, b) + mae(b, c) + 1e-9


class TestMetricValue:
    def test_bounds(self):
        MetricValue("AUROC", 0.5, 10)
        with pytest.raises(ValueError):
            MetricValue("AUROC", 1.2, 10)
        with pytest.raises(ValueError):
            MetricValue("MAE", -1.0, 10)
        with pytest.raises(ValueError):
            MetricValue("R2", 1.5, 10)
        MetricValue("R2", -3.0, 10)  # R2 may be arbitrarily negative
