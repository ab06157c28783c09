"""Training losses with analytic gradients: penalty-reduced focal loss on
heatmaps, masked L1 on regression channels, and binary cross-entropy on
the second-stage score. Everything is a pure function of numpy inputs so
gradients can be checked against finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Probabilities are clamped into [EPS, 1 - EPS] before any log.
EPS = 1e-6


@dataclass
class LossValue:
    """A non-negative loss and its gradient w.r.t. the prediction."""

    value: float
    gradient: np.ndarray


def clamp_probs(p: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Clamp probabilities strictly inside (0, 1) for safe logs."""
    return np.clip(p, eps, 1.0 - eps)


def focal_loss(
    pred: np.ndarray,
    target: np.ndarray,
    alpha: float = 2.0,
    beta: float = 4.0,
) -> LossValue:
    """Penalty-reduced focal loss over a heatmap.

    Cells where the target is exactly 1 are positives; everywhere else the
    penalty is down-weighted by (1 - target)^beta so the soft shoulder of
    each rendered peak is punished less. The sum is normalized by the
    number of positive cells (at least 1).

        L = -(1/N) * sum[ (1-p)^a log p            if target == 1
                          (1-t)^b p^a log(1-p)     otherwise ]

    Predictions must already be clamped strictly inside (0, 1); see
    clamp_probs.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    if np.any(pred <= 0.0) or np.any(pred >= 1.0):
        raise ValueError("pred must be strictly inside (0, 1); clamp before calling")

    pos = target == 1.0
    n = max(int(np.count_nonzero(pos)), 1)

    log_p = np.log(pred)
    log_1p = np.log1p(-pred)
    one_m_pred = 1.0 - pred

    pos_term = np.where(pos, one_m_pred**alpha * log_p, 0.0)
    neg_weight = np.where(pos, 0.0, (1.0 - target) ** beta)
    neg_term = neg_weight * pred**alpha * log_1p
    value = -(pos_term.sum() + neg_term.sum()) / n

    grad_pos = alpha * one_m_pred ** (alpha - 1.0) * log_p - one_m_pred**alpha / pred
    grad_neg = -neg_weight * (alpha * pred ** (alpha - 1.0) * log_1p - pred**alpha / one_m_pred)
    gradient = np.where(pos, grad_pos, grad_neg) / n
    return LossValue(float(value), gradient)


def l1_regression_loss(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> LossValue:
    """Mean absolute error over masked cells and channels only.

    pred and target are (W, L, C); mask is (W, L) and selects the cells
    that are supervised. An empty mask yields a zero loss with a zero
    gradient. Unmasked cells contribute exactly 0 to both.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    if mask.shape != pred.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match grid {pred.shape[:2]}")

    n_cells = int(np.count_nonzero(mask))
    if n_cells == 0:
        return LossValue(0.0, np.zeros_like(pred))

    denom = n_cells * pred.shape[2]
    diff = np.where(mask[:, :, None], pred - target, 0.0)
    value = np.abs(diff).sum() / denom
    gradient = np.sign(diff) / denom
    return LossValue(float(value), gradient)


def score_bce(pred_score: float, target: float) -> LossValue:
    """Binary cross-entropy on a single confidence score.

        L = -t log(p) - (1-t) log(1-p),  dL/dp = (p - t) / (p (1-p))

    The prediction is clamped into [EPS, 1 - EPS] before evaluation.
    """
    if not 0.0 <= target <= 1.0:
        raise ValueError(f"target must be in [0, 1], got {target!r}")
    p = float(np.clip(pred_score, EPS, 1.0 - EPS))
    value = -target * math.log(p) - (1.0 - target) * math.log1p(-p)
    gradient = (p - target) / (p * (1.0 - p))
    return LossValue(value, np.float64(gradient))
