"""Frame-level scoring and ROC-AUC."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from wsvad.clustering import RandomPair, kmeans2, prepare_points
from wsvad.data import VideoSample
from wsvad.errors import DataError
from wsvad.graph import build_adjacency
from wsvad.guidance import guide_scores
from wsvad.model import ModelParams, forward
from wsvad.numcore import make_rng


def expand_to_frames(segment_scores: np.ndarray, frame_count: int) -> np.ndarray:
    """Frame ``f`` takes the score of segment ``floor(f * T / frame_count)``."""
    s = np.asarray(segment_scores, dtype=np.float64)
    if s.size < 1 or frame_count < 1:
        raise ValueError("need at least one segment and one frame")
    return s[(np.arange(frame_count) * s.size) // frame_count]


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC: P(pos > neg) + 0.5 * P(pos == neg)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC-AUC needs both positive and negative labels")
    # twice the average ranks are integers, so the rank sum is exact
    twice_ranks = (2.0 * rankdata(s)).astype(np.int64)
    u2 = int(twice_ranks[y].sum()) - n_pos * (n_pos + 1)
    return u2 / (2.0 * n_pos * n_neg)


@dataclass
class EvalResult:
    auc: float
    per_video_auc: dict[str, float]
    frame_scores: dict[str, np.ndarray] = field(repr=False)
    frame_labels: dict[str, np.ndarray] = field(repr=False)


def score_video(
    params: ModelParams,
    video: VideoSample,
    rectify: bool = False,
    alpha: float = 1.3,
    tap: str = "gcn1",
    rng: np.random.Generator | None = None,
    sim_threshold: float = 0.0,
) -> np.ndarray:
    """Segment scores for one video in eval mode, optionally rectified.

    Rectification clusters this video's own tap-layer features.
    """
    adj = build_adjacency(video.features, sim_threshold=sim_threshold)
    trace = forward(params, video.features, adj, training=False)
    scores = trace.scores
    if rectify and video.label == 1 and video.num_segments >= 2:
        res = kmeans2(prepare_points([trace.tap(tap)]), RandomPair(), rng)
        scores = guide_scores(scores, 1, res.assignments, alpha, res.center_distance)
    return scores


def evaluate(
    params: ModelParams,
    videos: list[VideoSample],
    rectify: bool = True,
    alpha: float = 1.3,
    tap: str = "gcn1",
    seed: int = 0,
    sim_threshold: float = 0.0,
) -> EvalResult:
    """Overall AUC over the concatenation of every video's frames."""
    if not videos:
        raise DataError("no videos to evaluate")
    rng = make_rng(seed)
    frame_scores, frame_labels, per_video = {}, {}, {}
    for v in videos:
        seg = score_video(params, v, rectify, alpha, tap, rng, sim_threshold)
        fs = expand_to_frames(seg, v.frame_count)
        fl = v.frame_labels()
        frame_scores[v.id], frame_labels[v.id] = fs, fl
        per_video[v.id] = roc_auc(fs, fl) if 0 < fl.sum() < fl.size else float("nan")
    all_scores = np.concatenate(list(frame_scores.values()))
    all_labels = np.concatenate(list(frame_labels.values()))
    if all_labels.min() == all_labels.max():
        raise DataError("evaluation frames carry a single ground-truth class")
    return EvalResult(roc_auc(all_scores, all_labels), per_video, frame_scores, frame_labels)


def write_scores_csv(result: EvalResult, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["video_id", "frame_index", "score", "label"])
        for vid, scores in result.frame_scores.items():
            labels = result.frame_labels[vid]
            for i, (s, y) in enumerate(zip(scores, labels)):
                w.writerow([vid, i, repr(float(s)), int(y)])
