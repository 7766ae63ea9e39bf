"""Two-way Lloyd K-means with pluggable initialization and extra samples."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from wsvad.errors import ShapeError
from wsvad.numcore import DEFAULT_EPS, check_finite, l2_normalize_rows


@dataclass(frozen=True)
class RandomPair:
    """Start from two distinct participating points chosen by the rng."""


@dataclass(frozen=True)
class GivenCenters:
    c1: np.ndarray
    c2: np.ndarray


InitStrategy = Union[RandomPair, GivenCenters]


@dataclass
class ClusterResult:
    assignments: np.ndarray  # labels in {0, 1} for the primary points only
    centers: np.ndarray  # (2, H)
    center_distance: float
    objective: float
    iterations: int
    counts: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=np.int64))
    history: list[float] = field(default_factory=list)

    @property
    def c1(self) -> np.ndarray:
        return self.centers[0]

    @property
    def c2(self) -> np.ndarray:
        return self.centers[1]


def _assign(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d0 = np.sum((x - centers[0]) ** 2, axis=1)
    d1 = np.sum((x - centers[1]) ** 2, axis=1)
    return (d1 < d0).astype(np.int64)


def _means(x: np.ndarray, labels: np.ndarray) -> np.ndarray:
    out = np.empty((2, x.shape[1]))
    for k in (0, 1):
        out[k] = x[labels == k].mean(axis=0)
    return out


def _repair_empty(x: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # move the point farthest from its own center into the empty cluster
    empty = 0 if not np.any(labels == 0) else 1
    dist = np.sum((x - centers[labels]) ** 2, axis=1)
    labels = labels.copy()
    labels[int(np.argmax(dist))] = empty
    return labels


def _objective(x: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> float:
    return float(np.sum((x - centers[labels]) ** 2))


def kmeans2(
    points: np.ndarray,
    init: InitStrategy,
    rng: np.random.Generator | None = None,
    extra_samples: np.ndarray | None = None,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> ClusterResult:
    """Lloyd's algorithm with k=2.

    Extra samples take part in assignment and in the center means, but only
    the primary points' labels are reported. Iteration stops at a fixed point
    of the assignments, when the centers move less than ``tol``, or after
    ``max_iter`` rounds. The returned centers are always the means of the
    returned assignments.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ShapeError(f"points must be N x H with H >= 1, got {x.shape}")
    n = x.shape[0]
    if extra_samples is not None and len(extra_samples):
        extra = np.asarray(extra_samples, dtype=np.float64)
        if extra.ndim != 2 or extra.shape[1] != x.shape[1]:
            raise ShapeError(f"extra samples shape {extra.shape} does not fit points {x.shape}")
        x = np.vstack([x, extra])
    check_finite(x, "clustering input")
    total = x.shape[0]
    if total < 2:
        raise ValueError(f"need at least 2 points to cluster, got {total}")

    if isinstance(init, GivenCenters):
        centers = np.vstack([init.c1, init.c2]).astype(np.float64)
        if centers.shape != (2, x.shape[1]):
            raise ShapeError(f"initial centers shape {centers.shape} does not fit points {x.shape}")
    else:
        if rng is None:
            raise ValueError("RandomPair initialization needs an rng")
        i, j = rng.choice(total, size=2, replace=False)
        centers = x[[i, j]].copy()

    labels = None
    history: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        new_labels = _assign(x, centers)
        if not (np.any(new_labels == 0) and np.any(new_labels == 1)):
            new_labels = _repair_empty(x, new_labels, centers)
        new_centers = _means(x, new_labels)
        history.append(_objective(x, new_labels, new_centers))
        moved = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        unchanged = labels is not None and np.array_equal(new_labels, labels)
        labels, centers = new_labels, new_centers
        if unchanged or moved < tol:
            break

    return ClusterResult(
        assignments=labels[:n].copy(),
        centers=centers,
        center_distance=float(np.linalg.norm(centers[0] - centers[1])),
        objective=history[-1],
        iterations=it,
        counts=np.bincount(labels, minlength=2),
        history=history,
    )


def kmeans2_best_of(
    points: np.ndarray,
    restarts: int,
    rng: np.random.Generator,
    extra_samples: np.ndarray | None = None,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> ClusterResult:
    """Lowest-objective result over ``restarts`` RandomPair runs (first wins ties)."""
    best = None
    for _ in range(restarts):
        res = kmeans2(points, RandomPair(), rng, extra_samples, max_iter, tol)
        if best is None or res.objective < best.objective:
            best = res
    return best


def prepare_points(blocks: Sequence[np.ndarray], epsilon: float = DEFAULT_EPS) -> np.ndarray:
    """Stack per-video feature blocks vertically and unit-normalize every row."""
    if not blocks:
        raise ValueError("need at least one feature block")
    width = blocks[0].shape[-1]
    for b in blocks:
        if b.shape[-1] != width:
            raise ShapeError(f"column mismatch: {b.shape[-1]} != {width}")
    return l2_normalize_rows(np.vstack([b.reshape(-1, width) for b in blocks]), epsilon)
