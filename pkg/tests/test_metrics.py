"""Metric suite: macro classification scores against per-table oracles,
AUC against pair counting, surface distances against brute force, and the
t-test tail against direct quadrature of the density."""

import math

import numpy as np
import pytest

from radixnet.errors import DegenerateInputError, UsageError
from radixnet.metrics import (ConfusionMatrix, SurfacePointSet, asd,
                              classification_metrics, hd95,
                              paired_t_test_one_tail, roc_auc)


# ------------------------------------------------------------------ oracles

def macro_oracle(y_true, y_pred, k):
    """Hand construction: one binary table per class, binary formulas,
    unweighted mean; zero denominators contribute 0."""
    sums = {"acc": 0.0, "sen": 0.0, "spc": 0.0, "f1": 0.0}
    n = len(y_true)
    for cls in range(k):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == cls and p == cls)
        tn = sum(1 for t, p in zip(y_true, y_pred) if t != cls and p != cls)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != cls and p == cls)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == cls and p != cls)
        sums["acc"] += (tp + tn) / n
        sums["sen"] += tp / (tp + fn) if tp + fn else 0.0
        sums["spc"] += tn / (tn + fp) if tn + fp else 0.0
        sums["f1"] += 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
    return {m: v / k for m, v in sums.items()}


def pair_counting_auc(labels, scores):
    """Mann-Whitney: fraction of (positive, negative) pairs ranked
    correctly, ties worth one half."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0
               for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def brute_asd(a, b, spacing):
    def directed(src, dst):
        return [min(math.dist(p, q) for q in dst) for p in src]
    d1, d2 = directed(a, b), directed(b, a)
    return (sum(d1) + sum(d2)) / (len(a) + len(b)) * spacing


def brute_hd95(a, b, spacing):
    def directed(src, dst):
        return sorted(min(math.dist(p, q) for q in dst) for p in src)

    def pct95(values):
        # linear interpolation between order statistics
        pos = 0.95 * (len(values) - 1)
        lo = int(math.floor(pos))
        hi = min(lo + 1, len(values) - 1)
        frac = pos - lo
        return values[lo] * (1 - frac) + values[hi] * frac

    return max(pct95(directed(a, b)), pct95(directed(b, a))) * spacing


def t_upper_tail_quadrature(t, df, panels=200_000):
    """Upper tail of the t density by composite Simpson on a finite
    window (the polynomial tail beyond is negligible for df >= 5)."""
    const = math.gamma((df + 1) / 2) / (math.sqrt(df * math.pi)
                                        * math.gamma(df / 2))

    def density(u):
        return const * (1.0 + u * u / df) ** (-(df + 1) / 2)

    if t < 0:
        return 1.0 - t_upper_tail_quadrature(-t, df, panels)
    hi = max(t + 400.0, 400.0)
    xs = np.linspace(t, hi, 2 * panels + 1)
    ys = np.array([density(u) for u in xs])
    h = (hi - t) / (2 * panels)
    simpson = h / 3 * (ys[0] + ys[-1] + 4 * ys[1:-1:2].sum() + 2 * ys[2:-1:2].sum())
    return simpson


# ------------------------------------------------------------ classification

class TestClassification:
    def test_perfect_predictions(self):
        y = [0, 1, 2, 0, 1, 2]
        out = classification_metrics(y, y, 3)
        assert all(v == 1.0 for v in out.values())

    def test_hand_case(self):
        y_true = [0, 0, 1, 1, 2, 2]
        y_pred = [0, 1, 1, 2, 2, 0]
        out = classification_metrics(y_true, y_pred, 3)
        oracle = macro_oracle(y_true, y_pred, 3)
        for key in out:
            assert out[key] == pytest.approx(oracle[key], abs=1e-15)

    def test_twenty_random_cases_match_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            k = int(rng.integers(2, 5))
            n = int(rng.integers(4, 40))
            y_true = rng.integers(0, k, n)
            y_pred = rng.integers(0, k, n)
            out = classification_metrics(y_true, y_pred, k)
            oracle = macro_oracle(y_true.tolist(), y_pred.tolist(), k)
            for key in out:
                assert out[key] == pytest.approx(oracle[key], abs=1e-12)

    def test_single_class_truth_zero_denominator(self):
        with pytest.warns(RuntimeWarning):
            out = classification_metrics([0, 0, 0], [0, 0, 0], 2)
        # class 1 has no positives: SEN and F1 contribute 0
        assert out["sen"] == pytest.approx(0.5)
        assert out["acc"] == 1.0

    def test_confusion_counts_are_consistent(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            k = int(rng.integers(2, 5))
            n = int(rng.integers(5, 50))
            y_true = rng.integers(0, k, n)
            y_pred = rng.integers(0, k, n)
            cm = ConfusionMatrix.from_predictions(y_true, y_pred, k)
            correct = int(np.sum(y_true == y_pred))
            assert int(cm.tp.sum()) == correct
            for cls in range(k):
                assert cm.tp[cls] + cm.tn[cls] + cm.fp[cls] + cm.fn[cls] == n

    def test_binary_macro_acc_equals_overall(self):
        rng = np.random.default_rng(2)
        y_true = rng.integers(0, 2, 30)
        y_pred = rng.integers(0, 2, 30)
        out = classification_metrics(y_true, y_pred, 2)
        assert out["acc"] == pytest.approx(float(np.mean(y_true == y_pred)))

    def test_empty_rejected(self):
        with pytest.raises(UsageError):
            classification_metrics([], [], 3)


class TestAuc:
    def test_perfect_separation(self):
        y = [0, 0, 1, 1]
        s = np.array([[0.9, 0.1], [0.8, 0.2], [0.1, 0.9], [0.2, 0.8]])
        assert roc_auc(y, s, 2) == 1.0

    def test_random_scores_near_half(self):
        rng = np.random.default_rng(3)
        n = 4000
        y = rng.integers(0, 2, n)
        s = rng.uniform(size=(n, 2))
        assert roc_auc(y, s, 2) == pytest.approx(0.5, abs=0.05)

    def test_constant_scores_half(self):
        y = [0, 1, 0, 1]
        s = np.full((4, 2), 0.5)
        assert roc_auc(y, s, 2) == 0.5

    def test_eight_sample_matches_pair_counting(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            y = rng.integers(0, 2, 8)
            if y.min() == y.max():
                continue
            s1 = rng.choice([0.1, 0.4, 0.7, 0.9], size=8)  # with ties
            scores = np.column_stack([1 - s1, s1])
            ours = roc_auc(y, scores, 2)
            oracle = (pair_counting_auc((y == 0).astype(int), 1 - s1)
                      + pair_counting_auc(y, s1)) / 2
            assert ours == pytest.approx(oracle, abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(5)
        y = rng.integers(0, 3, 40)
        s = rng.uniform(size=(40, 3))
        base = roc_auc(y, s, 3)
        assert roc_auc(y, np.exp(4 * s), 3) == pytest.approx(base, abs=1e-12)
        assert roc_auc(y, 3 * s - 7, 3) == pytest.approx(base, abs=1e-12)


# ---------------------------------------------------------- surface metrics

class TestSurface:
    def test_identical_sets_zero(self):
        pts = np.random.default_rng(6).normal(size=(25, 2))
        a, b = SurfacePointSet(pts), SurfacePointSet(pts.copy())
        assert asd(a, b) == 0.0
        assert hd95(a, b) == 0.0

    def test_parallel_shift_gives_offset(self):
        xs = np.arange(100.0)
        line = np.column_stack([xs, np.zeros(100)])
        shifted = np.column_stack([xs, np.full(100, 2.5)])
        a, b = SurfacePointSet(line), SurfacePointSet(shifted)
        assert asd(a, b) == pytest.approx(2.5)
        assert hd95(a, b) == pytest.approx(2.5)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            a = rng.normal(size=(30, 2)) * 10
            b = rng.normal(size=(30, 2)) * 10
            sa = SurfacePointSet(a, spacing=0.4)
            sb = SurfacePointSet(b, spacing=0.4)
            assert abs(asd(sa, sb) - brute_asd(a, b, 0.4)) <= 1e-12
            assert abs(hd95(sa, sb) - brute_hd95(a, b, 0.4)) <= 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(8)
        a = SurfacePointSet(rng.normal(size=(20, 2)))
        b = SurfacePointSet(rng.normal(size=(35, 2)))
        assert asd(a, b) == asd(b, a)
        assert hd95(a, b) == hd95(b, a)

    def test_rigid_motion_invariance(self):
        rng = np.random.default_rng(9)
        a = rng.normal(size=(24, 2)) * 5
        b = rng.normal(size=(31, 2)) * 5
        theta, shift = 0.83, np.array([12.0, -4.5])
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        a2, b2 = a @ rot.T + shift, b @ rot.T + shift
        assert abs(asd(SurfacePointSet(a), SurfacePointSet(b))
                   - asd(SurfacePointSet(a2), SurfacePointSet(b2))) <= 1e-9
        assert abs(hd95(SurfacePointSet(a), SurfacePointSet(b))
                   - hd95(SurfacePointSet(a2), SurfacePointSet(b2))) <= 1e-9

    def test_hd95_clips_outlier(self):
        xs = np.arange(100.0)
        gt = np.column_stack([xs, np.zeros(100)])
        seg = gt.copy()
        seg[50, 1] = 40.0  # one outlier
        a, b = SurfacePointSet(seg), SurfacePointSet(gt)
        full_hausdorff = 40.0
        assert hd95(a, b) < 1.0 < full_hausdorff

    def test_spacing_mismatch(self):
        pts = np.zeros((3, 2))
        with pytest.raises(UsageError):
            asd(SurfacePointSet(pts, 1.0), SurfacePointSet(pts, 0.5))

    def test_empty_rejected(self):
        with pytest.raises(UsageError):
            SurfacePointSet(np.zeros((0, 2)))


# ------------------------------------------------------------------- t-test

class TestTTest:
    def test_zero_variance_rejected(self):
        a = [1.0, 2.0, 3.0]
        with pytest.raises(DegenerateInputError):
            paired_t_test_one_tail(a, a)

    def test_strong_positive_difference(self):
        rng = np.random.default_rng(10)
        b = rng.normal(size=12)
        a = b + 1.0 + rng.normal(0, 1e-3, 12)
        assert paired_t_test_one_tail(a, b) < 1e-10

    def test_matches_quadrature_oracle(self):
        a = np.array([3.1, 2.7, 3.6, 2.9, 3.3, 3.8, 2.5, 3.0, 3.4, 2.8])
        b = np.array([2.8, 2.9, 3.1, 2.4, 3.0, 3.2, 2.6, 2.7, 3.5, 2.5])
        d = a - b
        t = d.mean() / (d.std(ddof=1) / math.sqrt(len(d)))
        oracle = t_upper_tail_quadrature(t, len(d) - 1)
        assert paired_t_test_one_tail(a, b) == pytest.approx(oracle, abs=1e-6)

    def test_negative_t_side(self):
        rng = np.random.default_rng(11)
        a = rng.normal(size=10)
        b = a + 0.8 + rng.normal(0, 0.05, 10)
        p = paired_t_test_one_tail(a, b)
        d = a - b
        t = d.mean() / (d.std(ddof=1) / math.sqrt(10))
        assert t < 0 and p > 0.5
        assert p == pytest.approx(t_upper_tail_quadrature(t, 9), abs=1e-6)

    def test_length_mismatch(self):
        with pytest.raises(UsageError):
            paired_t_test_one_tail([1.0, 2.0], [1.0])
