"""Loss functions returning (value, gradient wrt predictions)."""

from __future__ import annotations

import numpy as np

BCE_EPS = 1e-7


def bce_loss(probs: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy; probabilities clamped to [eps, 1-eps]."""
    p = np.clip(np.asarray(probs, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {y.shape}")
    n = p.size
    loss = -float(np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))) / n
    inside = (probs > BCE_EPS) & (probs < 1.0 - BCE_EPS)
    grad = np.where(inside, (-y / p + (1.0 - y) / (1.0 - p)) / n, 0.0)
    return loss, grad


def mae_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean absolute deviation over all coordinate components."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    n = p.size
    diff = p - t
    loss = float(np.sum(np.abs(diff))) / n
    return loss, np.sign(diff) / n
