"""Pseudo-label orientation and score rectification from cluster labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PseudoLabels:
    cluster_labels: np.ndarray
    labels: np.ndarray
    s1: float
    s2: float

    @property
    def flipped(self) -> bool:
        return not np.array_equal(self.labels, self.cluster_labels)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    # rescale first so tiny (or huge) vectors do not underflow in the norms
    mu = np.max(np.abs(u), initial=0.0)
    mv = np.max(np.abs(v), initial=0.0)
    if mu == 0 or mv == 0:
        return 0.0
    u = np.asarray(u) / mu
    v = np.asarray(v) / mv
    return float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))


def orient_pseudo_labels(scores: np.ndarray, cluster_labels: np.ndarray) -> PseudoLabels:
    """Pick the cluster labelling (as is, or inverted) that best matches the scores.

    The labels are kept unless the inverted labelling has strictly higher
    cosine similarity with the scores.
    """
    s = np.asarray(scores, dtype=np.float64)
    yc = np.asarray(cluster_labels).astype(np.int64)
    if s.shape != yc.shape:
        raise ValueError(f"scores {s.shape} and labels {yc.shape} differ in length")
    inv = 1 - yc
    s1 = cosine(s, yc.astype(np.float64))
    s2 = cosine(s, inv.astype(np.float64))
    return PseudoLabels(yc, yc if s1 >= s2 else inv, s1, s2)


def rectify_scores(
    raw: np.ndarray, video_label: int, pseudo: np.ndarray, alpha: float
) -> np.ndarray:
    """Scale pseudo-positive scores of abnormal videos by ``alpha``, capped at 1."""
    s = np.asarray(raw, dtype=np.float64)
    if not video_label:
        return s.copy()
    return np.where(np.asarray(pseudo) == 1, np.minimum(alpha * s, 1.0), s)


def guide_scores(
    raw: np.ndarray,
    video_label: int,
    cluster_labels: np.ndarray,
    alpha: float,
    center_distance: float | None = None,
) -> np.ndarray:
    """Orient then rectify. Coincident centers (distance 0) carry no signal and leave scores as is."""
    if not video_label or center_distance == 0.0:
        return np.asarray(raw, dtype=np.float64).copy()
    pl = orient_pseudo_labels(raw, cluster_labels)
    return rectify_scores(raw, video_label, pl.labels, alpha)
