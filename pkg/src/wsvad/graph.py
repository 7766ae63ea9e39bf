"""Per-video global graph over segments: feature similarity plus temporal proximity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wsvad.errors import ShapeError
from wsvad.numcore import as_matrix


@dataclass(frozen=True)
class Adjacency:
    matrix: np.ndarray
    self_loops: bool = True

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def default_sigma_t(num_segments: int) -> float:
    return max(num_segments / 10.0, 1.0)


def feature_affinity(features: np.ndarray, sim_threshold: float = 0.0) -> np.ndarray:
    norms = np.linalg.norm(features, axis=1)
    nonzero = norms > 0
    unit = np.zeros_like(features)
    unit[nonzero] = features[nonzero] / norms[nonzero, None]
    aff = np.maximum(unit @ unit.T - sim_threshold, 0.0) / (1.0 - sim_threshold)
    aff[~nonzero, :] = 0.0
    aff[:, ~nonzero] = 0.0
    return aff


def temporal_affinity(num_segments: int, sigma_t: float) -> np.ndarray:
    idx = np.arange(num_segments)
    return np.exp(-np.abs(idx[:, None] - idx[None, :]) / sigma_t)


def build_adjacency(
    features: np.ndarray,
    sigma_t: float | None = None,
    sim_threshold: float = 0.0,
) -> Adjacency:
    """Row-normalized ``0.5 * (A_feat + A_temp) + I`` for one video.

    ``sigma_t`` defaults to ``max(T / 10, 1)``. Rows with zero norm get no
    feature affinity (their cosine is taken as 0).
    """
    f = as_matrix(features, "features")
    t, d = f.shape
    if t < 1 or d < 1:
        raise ShapeError(f"features must be non-empty, got {f.shape}")
    if sigma_t is None:
        sigma_t = default_sigma_t(t)
    if not sigma_t > 0:
        raise ValueError(f"sigma_t must be positive, got {sigma_t}")
    if not -1.0 <= sim_threshold < 1.0:
        raise ValueError(f"sim_threshold must lie in [-1, 1), got {sim_threshold}")
    raw = 0.5 * (feature_affinity(f, sim_threshold) + temporal_affinity(t, sigma_t)) + np.eye(t)
    return Adjacency(raw / raw.sum(axis=1, keepdims=True), self_loops=True)
