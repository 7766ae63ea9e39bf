"""Brute-force reference computations shared by the unit and acceptance tests."""

import itertools
import math

import numpy as np


def best_two_partition_objective(points: np.ndarray) -> float:
    """Minimum within-cluster sum of squares over every split into two non-empty groups."""
    n = points.shape[0]
    best = math.inf
    for bits in itertools.product((0, 1), repeat=n - 1):
        labels = np.array((0,) + bits)  # first point fixed to cluster 0: each split counted once
        if labels.all() or not labels.any():
            continue
        obj = 0.0
        for k in (0, 1):
            grp = points[labels == k]
            obj += float(np.sum((grp - grp.mean(axis=0)) ** 2))
        best = min(best, obj)
    return best


def pair_count_auc(scores, labels) -> float:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    pos, neg = scores[labels], scores[~labels]
    greater = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (greater + 0.5 * ties) / (pos.size * neg.size)


def sort_kmax_loss(scores, label) -> float:
    t = len(scores)
    k = math.floor(t / 8 + 1)
    order = sorted(range(t), key=lambda i: (-scores[i], i))[:k]
    terms = []
    for i in order:
        s = min(max(float(scores[i]), 1e-12), 1 - 1e-12)
        terms.append(-math.log(s) if label == 1 else -math.log(1 - s))
    return math.fsum(terms) / k


def brute_cosine(u, v) -> float:
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    return 0.0 if nu == 0 or nv == 0 else dot / (nu * nv)
