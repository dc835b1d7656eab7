"""Per-task losses and their weighted combination.

Emotion and age use mean squared error, country uses cross-entropy. The
total is a fixed homoscedastic-uncertainty weighting: with per-task
coefficients a_i,

    total = sum_i [ L_i / (2 * exp(a_i)) + a_i / 2 ]

The a_i are constants (not trained), so the a_i/2 terms only shift the
reported value; the gradient of the total w.r.t. each task loss is
1 / (2 * exp(a_i)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeError


@dataclass(frozen=True)
class LossConfig:
    alpha_emotion: float = 0.34
    alpha_country: float = 0.33
    alpha_age: float = 0.33

    def weights(self) -> tuple[float, float, float]:
        """Multipliers on (emotion, country, age) losses inside the total."""
        return (
            1.0 / (2.0 * math.exp(self.alpha_emotion)),
            1.0 / (2.0 * math.exp(self.alpha_country)),
            1.0 / (2.0 * math.exp(self.alpha_age)),
        )

    def constant_term(self) -> float:
        return (self.alpha_emotion + self.alpha_country + self.alpha_age) / 2.0


@dataclass(frozen=True)
class LossBreakdown:
    l_emotion: float
    l_country: float
    l_age: float
    l_total: float

    def to_dict(self) -> dict:
        return {
            "l_emotion": self.l_emotion,
            "l_country": self.l_country,
            "l_age": self.l_age,
            "l_total": self.l_total,
        }


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean over all entries of squared error.

    Returns ``(loss, dpred)`` with ``dpred = 2 (pred - target) / pred.size``.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError("mse_loss", pred.shape, target.shape)
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


def cross_entropy_loss(logits: np.ndarray, classes: np.ndarray):
    """Mean negative log-softmax of the true class, max-subtracted for
    stability.

    ``classes`` holds integer ids in [0, n_classes). Returns
    ``(loss, dlogits)`` with ``dlogits = (softmax - onehot) / n``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    classes = np.asarray(classes)
    if logits.ndim != 2 or classes.shape != (logits.shape[0],):
        raise ShapeError("cross_entropy_loss", logits.shape, classes.shape)
    n, k = logits.shape
    classes = classes.astype(np.int64)
    if classes.size and (classes.min() < 0 or classes.max() >= k):
        bad = sorted(set(classes[(classes < 0) | (classes >= k)].tolist()))
        raise ValueError(f"class ids {bad} outside [0, {k})")

    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    softmax = exp / exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(exp.sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = float(-log_probs[rows, classes].mean())
    dlogits = softmax.copy()
    dlogits[rows, classes] -= 1.0
    return loss, dlogits / n


def total_loss(l_emotion: float, l_country: float, l_age: float, cfg: LossConfig) -> float:
    """Weighted sum of the three task losses plus the constant a_i/2 terms."""
    parts = (l_emotion, l_country, l_age)
    if not all(math.isfinite(v) for v in parts):
        raise NumericalError(f"total_loss: non-finite component losses {parts}")
    w_e, w_c, w_a = cfg.weights()
    return l_emotion * w_e + l_country * w_c + l_age * w_a + cfg.constant_term()


def combine(l_emotion: float, l_country: float, l_age: float, cfg: LossConfig) -> LossBreakdown:
    return LossBreakdown(
        l_emotion=l_emotion,
        l_country=l_country,
        l_age=l_age,
        l_total=total_loss(l_emotion, l_country, l_age, cfg),
    )
