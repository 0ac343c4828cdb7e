"""Evaluation metrics: one-vs-rest macro classification scores, ROC AUC,
surface distances between boundary point sets, and the one-tail paired
t-test used to compare two methods' outputs.

Multi-class evaluation follows the N-binary-evaluations scheme: each of
the K classes is scored against the rest with the binary formulas

    ACC = (TP+TN)/(TP+TN+FP+FN)   SEN = TP/(TP+FN)
    SPC = TN/(TN+FP)              F1  = 2TP/(2TP+FP+FN)

and the unweighted mean over classes is reported. A class whose
denominator is zero contributes 0 to the mean (with a warning) rather
than NaN.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import stdtr

from . import _kernels
from .errors import DegenerateInputError, UsageError

__all__ = [
    "ConfusionMatrix", "classification_metrics", "roc_auc",
    "SurfacePointSet", "asd", "hd95", "paired_t_test_one_tail",
    "read_predictions_csv", "read_pointset_csv",
]


@dataclass(frozen=True)
class ConfusionMatrix:
    """One-vs-rest counts per class; arrays of length K."""
    tp: np.ndarray
    tn: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    @classmethod
    def from_predictions(cls, y_true, y_pred, classes: int) -> "ConfusionMatrix":
        yt = np.asarray(y_true, dtype=np.int64)
        yp = np.asarray(y_pred, dtype=np.int64)
        if yt.size == 0:
            raise UsageError("empty label arrays")
        if yt.shape != yp.shape or yt.ndim != 1:
            raise UsageError(
                f"label arrays must be equal-length vectors: {yt.shape} vs {yp.shape}")
        if yt.min() < 0 or yt.max() >= classes or yp.min() < 0 or yp.max() >= classes:
            raise UsageError(f"labels must lie in 0..{classes - 1}")
        tp = np.empty(classes, dtype=np.int64)
        tn = np.empty_like(tp)
        fp = np.empty_like(tp)
        fn = np.empty_like(tp)
        for k in range(classes):
            pos_t, pos_p = yt == k, yp == k
            tp[k] = np.sum(pos_t & pos_p)
            tn[k] = np.sum(~pos_t & ~pos_p)
            fp[k] = np.sum(~pos_t & pos_p)
            fn[k] = np.sum(pos_t & ~pos_p)
        return cls(tp, tn, fp, fn)

    @property
    def total(self) -> int:
        return int(self.tp[0] + self.tn[0] + self.fp[0] + self.fn[0])


def _safe_ratio(num: np.ndarray, den: np.ndarray, name: str) -> np.ndarray:
    num = num.astype(np.float64)
    out = np.zeros_like(num)
    ok = den > 0
    if not ok.all():
        warnings.warn(
            f"{name}: zero denominator for class(es)"
            f" {np.nonzero(~ok)[0].tolist()}, reporting 0", RuntimeWarning,
            stacklevel=3)
    out[ok] = num[ok] / den[ok]
    return out


def classification_metrics(y_true, y_pred, classes: int) -> dict[str, float]:
    """Macro-averaged ACC, SEN, SPC and F1 over one-vs-rest splits."""
    cm = ConfusionMatrix.from_predictions(y_true, y_pred, classes)
    acc = _safe_ratio(cm.tp + cm.tn, cm.tp + cm.tn + cm.fp + cm.fn, "ACC")
    sen = _safe_ratio(cm.tp, cm.tp + cm.fn, "SEN")
    spc = _safe_ratio(cm.tn, cm.tn + cm.fp, "SPC")
    f1 = _safe_ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn, "F1")
    return {"acc": float(acc.mean()), "sen": float(sen.mean()),
            "spc": float(spc.mean()), "f1": float(f1.mean())}


def _binary_auc(labels: np.ndarray, scores: np.ndarray) -> float:
    pos = int(labels.sum())
    neg = labels.size - pos
    if pos == 0 or neg == 0:
        warnings.warn("AUC undefined for a single-class split, reporting 0.5",
                      RuntimeWarning, stacklevel=3)
        return 0.5
    order = np.argsort(-scores, kind="stable")
    s, l = scores[order], labels[order]
    # threshold boundaries where the score changes (ties grouped)
    boundary = np.nonzero(np.diff(s))[0]
    idx = np.concatenate([boundary, [s.size - 1]])
    tp = np.cumsum(l)[idx]
    fp = np.cumsum(1 - l)[idx]
    tpr = np.concatenate([[0.0], tp / pos])
    fpr = np.concatenate([[0.0], fp / neg])
    return float(np.trapezoid(tpr, fpr))


def roc_auc(y_true, scores, classes: int) -> float:
    """Macro one-vs-rest area under the ROC curve (trapezoidal over all
    thresholds, ties grouped; constant scores give 0.5)."""
    yt = np.asarray(y_true, dtype=np.int64)
    sc = np.asarray(scores, dtype=np.float64)
    if sc.ndim != 2 or sc.shape != (yt.size, classes):
        raise UsageError(
            f"scores must be (n, {classes}), got {sc.shape} for {yt.size} labels")
    if yt.size == 0:
        raise UsageError("empty label array")
    aucs = [_binary_auc((yt == k).astype(np.int64), sc[:, k])
            for k in range(classes)]
    return float(np.mean(aucs))


# ---------------------------------------------------------- surface metrics

@dataclass(frozen=True)
class SurfacePointSet:
    """Boundary points in pixel coordinates with physical spacing (mm/px)."""
    points: np.ndarray
    spacing: float = 1.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
            raise UsageError(f"points must be a non-empty (n, 2) array, got {pts.shape}")
        if not self.spacing > 0:
            raise UsageError(f"spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "points", pts)


def _check_pair(seg: SurfacePointSet, gt: SurfacePointSet) -> None:
    if seg.spacing != gt.spacing:
        raise UsageError(
            f"spacing mismatch: {seg.spacing} vs {gt.spacing}")


def asd(seg: SurfacePointSet, gt: SurfacePointSet) -> float:
    """Average symmetric surface distance in mm: both directed
    nearest-distance sums divided by the total point count."""
    _check_pair(seg, gt)
    d_sg = _kernels.directed_min_dists(seg.points, gt.points)
    d_gs = _kernels.directed_min_dists(gt.points, seg.points)
    total = d_sg.sum() + d_gs.sum()
    return float(total / (len(seg.points) + len(gt.points)) * seg.spacing)


def hd95(seg: SurfacePointSet, gt: SurfacePointSet) -> float:
    """95th-percentile bidirectional Hausdorff distance in mm: the max of
    the two directed 95th percentiles (linear-interpolation order
    statistics)."""
    _check_pair(seg, gt)
    d_sg = _kernels.directed_min_dists(seg.points, gt.points)
    d_gs = _kernels.directed_min_dists(gt.points, seg.points)
    p = max(np.percentile(d_sg, 95.0), np.percentile(d_gs, 95.0))
    return float(p * seg.spacing)


# ------------------------------------------------------------------- t-test

def paired_t_test_one_tail(a, b) -> float:
    """Upper-tail p-value of the paired t statistic on a - b.

    t = mean(d) / (std(d) / sqrt(n)) with n-1 degrees of freedom; small p
    means a systematically exceeds b.
    """
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape or av.ndim != 1:
        raise UsageError(f"need equal-length vectors, got {av.shape} vs {bv.shape}")
    n = av.size
    if n < 2:
        raise UsageError(f"need at least 2 pairs, got {n}")
    d = av - bv
    s = d.std(ddof=1)
    if s == 0.0:
        raise DegenerateInputError("paired differences have zero variance")
    t = d.mean() / (s / math.sqrt(n))
    return float(stdtr(n - 1, -t))


# ----------------------------------------------------------------- file I/O

def read_predictions_csv(path):
    """CSV with columns true_label, pred_label, score_0..score_{K-1}.

    A header line is optional. Returns (y_true, y_pred, scores).
    """
    y_true, y_pred, rows = [], [], []
    width = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if parts[0] == "true_label":
                continue
            if len(parts) < 3:
                raise UsageError(
                    f"{path}: row {lineno}: expected true,pred,scores..., got {raw!r}")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise UsageError(
                    f"{path}: row {lineno}: expected {width} columns, got {len(parts)}")
            try:
                y_true.append(int(parts[0]))
                y_pred.append(int(parts[1]))
                rows.append([float(v) for v in parts[2:]])
            except ValueError:
                raise UsageError(f"{path}: row {lineno}: malformed value in {raw!r}")
    if not rows:
        raise UsageError(f"{path}: no data rows")
    return (np.array(y_true, dtype=np.int64), np.array(y_pred, dtype=np.int64),
            np.array(rows, dtype=np.float64))


def read_pointset_csv(path, spacing: float = 1.0) -> SurfacePointSet:
    """Point-set file: one ``x,y`` per line, ``#`` comments allowed."""
    pts = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise UsageError(f"{path}: row {lineno}: expected 'x,y', got {raw!r}")
            try:
                pts.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise UsageError(f"{path}: row {lineno}: non-numeric value in {raw!r}")
    if not pts:
        raise UsageError(f"{path}: no points")
    return SurfacePointSet(np.array(pts), spacing)
