"""Task metrics: AUROC, precision-recall / AUPRC, max-F1, R^2 and MAE.

AUPRC follows the two-stage convention used throughout this project: the
raw step curve is kept for audit, and the reported value comes from
interpolating precision onto a uniform 1000-point recall grid, median
filtering (width 9) and trapezoid integration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import medfilt
from scipy.stats import rankdata

BOUNDED_KINDS = {"AUPRC", "F1max", "AUROC", "Se", "Sp", "PPV"}
METRIC_KINDS = BOUNDED_KINDS | {"R2", "MAE"}


@dataclass(frozen=True)
class MetricValue:
    kind: str
    value: float
    n: int

    def __post_init__(self) -> None:
        if self.kind not in METRIC_KINDS:
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.kind in BOUNDED_KINDS and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"{self.kind} = {self.value} outside [0, 1]")
        if self.kind == "MAE" and self.value < 0:
            raise ValueError("MAE must be >= 0")
        if self.kind == "R2" and self.value > 1.0:
            raise ValueError("R2 cannot exceed 1")


def _check_binary(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(int)
    if s.shape != y.shape:
        raise ValueError("scores and labels must align")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be binary")
    return s, y


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """P(random positive outranks random negative), ties counted 1/2.

    Computed via average ranks, which matches the exhaustive pairwise
    definition exactly.
    """
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes present")
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _raw_pr_points(s: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(recall, precision) at every distinct threshold, descending score."""
    order = np.argsort(-s, kind="stable")
    y_sorted = y[order]
    s_sorted = s[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(1 - y_sorted)
    last_of_group = np.r_[np.nonzero(np.diff(s_sorted))[0], s_sorted.size - 1]
    precision = tp[last_of_group] / (tp[last_of_group] + fp[last_of_group])
    recall = tp[last_of_group] / tp[-1]
    return recall, precision


@dataclass(frozen=True)
class PrCurve:
    recall_raw: np.ndarray
    precision_raw: np.ndarray
    recall_grid: np.ndarray
    precision_grid: np.ndarray   # after interpolation + median filter
    auprc: float                 # on the processed curve
    auprc_raw: float             # step integral of the raw curve, for audit


def pr_curve_and_auprc(scores: np.ndarray, labels: np.ndarray,
                       grid_points: int = 1000, median_width: int = 9) -> PrCurve:
    s, y = _check_binary(scores, labels)
    if y.sum() == 0:
        raise ValueError("AUPRC needs at least one positive")
    recall, precision = _raw_pr_points(s, y)

    prev_r = np.r_[0.0, recall[:-1]]
    auprc_raw = float(np.sum((recall - prev_r) * precision))

    # One precision per recall: as the threshold drops at fixed recall the
    # precision falls, so the first occurrence is the curve's upper envelope.
    first = np.r_[True, np.diff(recall) > 0]
    r_u, p_u = recall[first], precision[first]
    if r_u[0] > 0.0:
        r_u = np.r_[0.0, r_u]
        p_u = np.r_[p_u[0], p_u]
    grid = np.linspace(0.0, 1.0, grid_points)
    interp = np.interp(grid, r_u, p_u)
    filtered = medfilt(interp, kernel_size=median_width)
    auprc = float(np.trapezoid(filtered, grid))
    return PrCurve(recall_raw=recall, precision_raw=precision,
                   recall_grid=grid, precision_grid=filtered,
                   auprc=auprc, auprc_raw=auprc_raw)


def f1_max(scores: np.ndarray, labels: np.ndarray) -> float:
    """Max over all distinct-score thresholds of the PPV/Se harmonic mean."""
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("F1 needs at least one positive")
    order = np.argsort(-s, kind="stable")
    y_sorted = y[order]
    s_sorted = s[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(1 - y_sorted)
    last_of_group = np.r_[np.nonzero(np.diff(s_sorted))[0], s_sorted.size - 1]
    ppv = tp[last_of_group] / (tp[last_of_group] + fp[last_of_group])
    se = tp[last_of_group] / n_pos
    denom = ppv + se
    valid = denom > 0
    if not valid.any():
        raise ValueError("F1 undefined at every threshold")
    f1 = 2.0 * ppv[valid] * se[valid] / denom[valid]
    return float(f1.max())


def confusion_rates(scores: np.ndarray, labels: np.ndarray,
                    threshold: float) -> dict[str, float]:
    """Se / Sp / PPV of the ``score >= threshold`` rule."""
    s, y = _check_binary(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    return {
        "Se": tp / (tp + fn) if tp + fn else float("nan"),
        "Sp": tn / (tn + fp) if tn + fp else float("nan"),
        "PPV": tp / (tp + fp) if tp + fp else float("nan"),
    }


def r2_mae(predictions: np.ndarray, truths: np.ndarray) -> tuple[float | None, float]:
    """R^2 = 1 - SS_res/SS_tot (None for constant truths) and mean |error|."""
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(truths, dtype=float).ravel()
    if p.shape != t.shape:
        raise ValueError("predictions and truths must align")
    if p.size < 2:
        raise ValueError("need at least two points")
    mae = float(np.mean(np.abs(p - t)))
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0.0:
        return None, mae
    ss_res = float(np.sum((t - p) ** 2))
    return 1.0 - ss_res / ss_tot, mae
