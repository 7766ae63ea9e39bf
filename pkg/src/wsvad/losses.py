"""Batch-clustering loss, k-max MIL loss and their weighted sum."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from wsvad.clustering import ClusterResult

SCORE_CLAMP = 1e-12


@dataclass(frozen=True)
class HyperParams:
    mu: float = 1.0
    lambda1: float = 0.1
    alpha: float = 1.3
    batch_size: int = 64
    dropout_p: float = 0.6
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epsilon_d: float = 1e-6

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.lambda1 < 0:
            raise ValueError(f"lambda1 must be >= 0, got {self.lambda1}")
        if self.alpha < 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ValueError(f"batch_size must be even and >= 2, got {self.batch_size}")
        if not 0 <= self.dropout_p < 1:
            raise ValueError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")


def num_selected(t: int) -> int:
    """k = floor(T/8 + 1)."""
    return t // 8 + 1


def top_k_indices(scores: np.ndarray, k: int) -> np.ndarray:
    # stable sort on the negated scores keeps the lower index first among ties
    return np.argsort(-np.asarray(scores), kind="stable")[:k]


def kmax_loss(scores: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy over the k highest scores, and its gradient."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size < 1:
        raise ValueError(f"scores must be a non-empty vector, got shape {s.shape}")
    k = num_selected(s.size)
    idx = top_k_indices(s, k)
    sel = np.clip(s[idx], SCORE_CLAMP, 1.0 - SCORE_CLAMP)
    if label:
        terms = [-math.log(v) for v in sel]
        g = -1.0 / sel
    else:
        terms = [-math.log(1.0 - v) for v in sel]
        g = 1.0 / (1.0 - sel)
    grad = np.zeros_like(s)
    grad[idx] = g / k
    return math.fsum(terms) / k, grad


def batch_cluster_loss(
    result: ClusterResult, cls: str, hp: HyperParams
) -> tuple[float, np.ndarray]:
    """Loss on the distance between the two centers and its gradient w.r.t. them.

    Normal batches pay ``min(d, mu)`` (pull centers together); abnormal
    batches pay ``1 / (d + eps)`` (push them apart). Returns the value and a
    ``(2, H)`` gradient for ``(c1, c2)``.
    """
    diff = result.c1 - result.c2
    d = float(np.linalg.norm(diff))
    unit = diff / d if d > 0 else np.zeros_like(diff)
    if cls == "normal":
        value = min(d, hp.mu)
        slope = 1.0 if d < hp.mu else 0.0
    elif cls == "abnormal":
        value = 1.0 / (d + hp.epsilon_d)
        slope = -1.0 / (d + hp.epsilon_d) ** 2
    else:
        raise ValueError(f"class must be 'normal' or 'abnormal', got {cls!r}")
    gc1 = slope * unit
    return value, np.vstack([gc1, -gc1])


def center_grad_to_points(
    result: ClusterResult, center_grad: np.ndarray, num_points: int | None = None
) -> np.ndarray:
    """Spread center gradients over the primary points through the mean map.

    Assignments are held fixed; each point receives its center's gradient
    divided by that cluster's size (extra samples count towards the size).
    """
    labels = result.assignments
    n = labels.shape[0] if num_points is None else num_points
    counts = np.maximum(result.counts, 1)
    return center_grad[labels[:n]] / counts[labels[:n], None]


def total_loss(kmax: float, bc: float, hp: HyperParams) -> float:
    return kmax + hp.lambda1 * bc
