"""Task losses on model outputs, with their exact gradients.

Classification uses mean weighted binary cross-entropy on the sigmoid
outputs, clamped to (eps, 1-eps); the gradient is the true gradient of the
clamped expression (zero where the clamp is active), so finite-difference
checks agree to machine-level accuracy. Regression uses mean absolute
error.
"""

from __future__ import annotations

import numpy as np

BCE_EPS = 1e-7


def make_element_weights(targets: np.ndarray,
                         class_weights: tuple[np.ndarray, np.ndarray] | None
                         ) -> np.ndarray:
    """Per-element weights from per-output (w_positive, w_negative)."""
    if class_weights is None:
        return np.ones_like(targets, dtype=float)
    w_pos, w_neg = class_weights
    return targets * np.asarray(w_pos)[None, :] \
        + (1.0 - targets) * np.asarray(w_neg)[None, :]


def bce_loss(outputs: np.ndarray, targets: np.ndarray,
             weights: np.ndarray | None = None,
             eps: float = BCE_EPS) -> tuple[float, np.ndarray]:
    """(loss, d loss / d outputs); mean over every output element."""
    p = np.asarray(outputs, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError("outputs and targets must align")
    w = np.ones_like(p) if weights is None else np.asarray(weights, dtype=np.float64)
    pc = np.clip(p, eps, 1.0 - eps)
    n = p.size
    loss = float(-(w * (t * np.log(pc) + (1.0 - t) * np.log1p(-pc))).sum() / n)
    inside = (p > eps) & (p < 1.0 - eps)
    grad = np.where(inside, w * (-t / pc + (1.0 - t) / (1.0 - pc)) / n, 0.0)
    return loss, grad.astype(outputs.dtype)


def mae_loss(outputs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    p = np.asarray(outputs, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError("outputs and targets must align")
    n = p.size
    loss = float(np.abs(p - t).sum() / n)
    grad = (np.sign(p - t) / n).astype(outputs.dtype)
    return loss, grad


def task_loss(task: str, outputs: np.ndarray, targets: np.ndarray,
              class_weights: tuple[np.ndarray, np.ndarray] | None = None
              ) -> tuple[float, np.ndarray]:
    """Dispatch on the task: BCE for the classifications, MAE for age."""
    t = np.asarray(targets, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    if task in ("diagnosis", "risk"):
        return bce_loss(outputs, t, make_element_weights(t, class_weights))
    if task == "age":
        return mae_loss(outputs, t)
    raise ValueError(f"unknown task {task!r}")
