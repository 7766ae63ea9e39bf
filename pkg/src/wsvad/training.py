"""Balanced batches, the per-iteration pipeline, Adam, and epoch orchestration."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from wsvad.clustering import ClusterResult, kmeans2
from wsvad.crossbatch import STRATEGIES, CenterMemory
from wsvad.data import VideoSample, uniform_sample_segments
from wsvad.errors import DataError, NumericalError
from wsvad.evaluation import evaluate
from wsvad.graph import build_adjacency
from wsvad.guidance import guide_scores
from wsvad.losses import (
    HyperParams,
    batch_cluster_loss,
    center_grad_to_points,
    kmax_loss,
)
from wsvad.model import DEFAULT_WIDTHS, TAP_LAYERS, ModelParams, backward, forward, init_params, zeros_like
from wsvad.numcore import check_finite, l2_normalize_rows, l2_normalize_rows_backward, make_rng

log = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "epoch", "loss_total", "loss_kmax", "loss_bc_normal", "loss_bc_abnormal",
    "d_normal_mean", "d_abnormal_mean", "val_auc",
)


@dataclass(frozen=True)
class TrainConfig:
    hp: HyperParams = field(default_factory=HyperParams)
    epochs: int = 50
    seed: int = 0
    strategy: str = "way1"
    enable_bc: bool = True
    enable_bcg: bool = True
    rectify_train: bool = False
    tap: str = "gcn1"
    segments: int = 64
    widths: tuple[int, int, int, int] = DEFAULT_WIDTHS
    sim_threshold: float = 0.0
    kmeans_max_iter: int = 100
    kmeans_tol: float = 1e-6

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.strategy != "none" and not self.enable_bc:
            raise ValueError("cross-batch learning needs the batch-clustering loss enabled")
        if self.tap not in TAP_LAYERS:
            raise ValueError(f"tap must be one of {TAP_LAYERS}, got {self.tap!r}")
        if self.epochs < 0 or self.segments < 1:
            raise ValueError("epochs must be >= 0 and segments >= 1")
        if self.widths[-1] != 1:
            raise ValueError("the last layer must have width 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["hp"] = HyperParams(**d["hp"])
        d["widths"] = tuple(d["widths"])
        return cls(**d)


@dataclass
class AdamState:
    m: ModelParams
    v: ModelParams
    step: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        return cls(zeros_like(params), zeros_like(params), 0)


def adam_step(
    params: ModelParams,
    grads: ModelParams,
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[ModelParams, AdamState]:
    for name, g in grads.blocks():
        check_finite(g, f"gradient {name}")
    t = state.step + 1
    m = state.m.map(lambda m_, g: beta1 * m_ + (1.0 - beta1) * g, grads)
    v = state.v.map(lambda v_, g: beta2 * v_ + (1.0 - beta2) * g * g, grads)
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    new = params.map(lambda p, m_, v_: p - lr * (m_ / c1) / (np.sqrt(v_ / c2) + eps), m, v)
    return new, AdamState(m, v, t)


@dataclass
class TrainingSet:
    """Uniformly sampled features and adjacencies, stacked for batched passes."""

    features: np.ndarray  # (N, T, D)
    adjacency: np.ndarray  # (N, T, T)
    labels: np.ndarray  # (N,)
    ids: list[str]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[2]


def prepare_training_set(
    videos: list[VideoSample], segments: int, sim_threshold: float = 0.0
) -> TrainingSet:
    if not videos:
        raise DataError("empty training set")
    feats = np.stack([uniform_sample_segments(v, segments) for v in videos])
    adj = np.stack([build_adjacency(f, sim_threshold=sim_threshold).matrix for f in feats])
    labels = np.array([v.label for v in videos], dtype=np.int64)
    return TrainingSet(feats, adj, labels, [v.id for v in videos])


def _draw(pool: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    # concatenated permutations: every member appears before any repeats
    reps = -(-count // pool.size)
    return np.concatenate([rng.permutation(pool) for _ in range(reps)])[:count]


def make_batches(
    labels: np.ndarray, batch_size: int, rng: np.random.Generator
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Balanced batches of ``(normal indices, abnormal indices)``, half each.

    The epoch has as many batches as it takes to show every abnormal video
    once; the smaller pools are resampled.
    """
    labels = np.asarray(labels)
    normal = np.flatnonzero(labels == 0)
    abnormal = np.flatnonzero(labels == 1)
    if normal.size == 0 or abnormal.size == 0:
        raise DataError("training needs at least one normal and one abnormal video")
    half = batch_size // 2
    n_batches = -(-abnormal.size // half)
    ab = _draw(abnormal, n_batches * half, rng)
    no = _draw(normal, n_batches * half, rng)
    return [(no[i * half:(i + 1) * half], ab[i * half:(i + 1) * half]) for i in range(n_batches)]


@dataclass
class BatchMetrics:
    loss_total: float
    loss_kmax: float
    loss_bc_normal: float = math.nan
    loss_bc_abnormal: float = math.nan
    d_normal: float = math.nan
    d_abnormal: float = math.nan


@dataclass
class EpochMetrics:
    epoch: int
    loss_total: float
    loss_kmax: float
    loss_bc_normal: float
    loss_bc_abnormal: float
    d_normal_mean: float
    d_abnormal_mean: float
    val_auc: float = math.nan
    batches: list[BatchMetrics] = field(default_factory=list, repr=False)

    def row(self) -> list[str]:
        return [str(self.epoch)] + [repr(float(getattr(self, c))) for c in METRIC_COLUMNS[1:]]


@dataclass
class TrainState:
    params: ModelParams
    adam: AdamState
    memory: CenterMemory
    rng: np.random.Generator
    epoch: int = 0


def init_state(config: TrainConfig, feature_dim: int) -> TrainState:
    rng = make_rng(config.seed)
    params = init_params(feature_dim, rng, config.widths)
    return TrainState(params, AdamState.zeros(params), CenterMemory(config.strategy), rng, 0)


def _cluster_class(
    state: TrainState, cls: str, tap_rows: np.ndarray, config: TrainConfig
) -> tuple[ClusterResult, np.ndarray]:
    raw = tap_rows.reshape(-1, tap_rows.shape[-1])
    points = l2_normalize_rows(raw)
    init, extra = state.memory.derive_init(cls, state.rng)
    res = kmeans2(points, init, state.rng, extra, config.kmeans_max_iter, config.kmeans_tol)
    state.memory.push_centers(cls, res.c1, res.c2)
    return res, raw


def train_step(
    state: TrainState,
    data: TrainingSet,
    normal_idx: np.ndarray,
    abnormal_idx: np.ndarray,
    config: TrainConfig,
) -> BatchMetrics:
    hp = config.hp
    idx = np.concatenate([normal_idx, abnormal_idx])
    half = normal_idx.size
    labels = data.labels[idx]
    trace = forward(state.params, data.features[idx], data.adjacency[idx],
                    training=True, dropout_p=hp.dropout_p, rng=state.rng)
    scores = trace.scores
    b, t = scores.shape

    metrics = BatchMetrics(math.nan, math.nan)
    grad_tap = None
    bc_total = 0.0
    abnormal_result = None
    if config.enable_bc or config.rectify_train:
        tap = trace.tap(config.tap)
        grad_tap = np.zeros_like(tap)
        for cls, rows in (("normal", slice(0, half)), ("abnormal", slice(half, b))):
            res, raw = _cluster_class(state, cls, tap[rows], config)
            if cls == "normal":
                metrics.d_normal = res.center_distance
            else:
                metrics.d_abnormal = res.center_distance
                abnormal_result = res
            if not config.enable_bc:
                continue
            value, g_centers = batch_cluster_loss(res, cls, hp)
            g_points = center_grad_to_points(res, g_centers)
            g_raw = hp.lambda1 * l2_normalize_rows_backward(raw, g_points)
            grad_tap[rows] = g_raw.reshape(tap[rows].shape)
            bc_total += value
            if cls == "normal":
                metrics.loss_bc_normal = value
            else:
                metrics.loss_bc_abnormal = value
        if not config.enable_bc:
            grad_tap = None

    used = scores
    if config.rectify_train:
        # rectified scores are detached: the k-max gradient passes straight through
        used = scores.copy()
        assign = abnormal_result.assignments.reshape(-1, t)
        for j in range(b - half):
            used[half + j] = guide_scores(scores[half + j], 1, assign[j], hp.alpha,
                                          abnormal_result.center_distance)

    grad_scores = np.empty_like(scores)
    kmax_values = []
    for i in range(b):
        value, g = kmax_loss(used[i], int(labels[i]))
        kmax_values.append(value)
        grad_scores[i] = g / b
    metrics.loss_kmax = math.fsum(kmax_values) / b
    metrics.loss_total = metrics.loss_kmax + hp.lambda1 * bc_total
    if not math.isfinite(metrics.loss_total):
        raise NumericalError(f"non-finite loss at epoch {state.epoch}: {metrics}")

    grads = backward(trace, state.params, grad_scores, grad_tap, config.tap)
    state.params, state.adam = adam_step(state.params, grads, state.adam,
                                         hp.lr, hp.beta1, hp.beta2, hp.adam_eps)
    return metrics


def _nanmean(values) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return math.fsum(vals) / len(vals) if vals else math.nan


def train_epoch(
    state: TrainState,
    data: TrainingSet,
    config: TrainConfig,
    val_videos: list[VideoSample] | None = None,
) -> EpochMetrics:
    batches = make_batches(data.labels, config.hp.batch_size, state.rng)
    per_batch = [train_step(state, data, n, a, config) for n, a in batches]
    state.memory.rollover_epoch()
    state.epoch += 1
    val_auc = math.nan
    if val_videos:
        val_auc = evaluate(state.params, val_videos, rectify=config.enable_bcg,
                           alpha=config.hp.alpha, tap=config.tap, seed=config.seed,
                           sim_threshold=config.sim_threshold).auc
    m = EpochMetrics(
        epoch=state.epoch,
        loss_total=_nanmean(x.loss_total for x in per_batch),
        loss_kmax=_nanmean(x.loss_kmax for x in per_batch),
        loss_bc_normal=_nanmean(x.loss_bc_normal for x in per_batch),
        loss_bc_abnormal=_nanmean(x.loss_bc_abnormal for x in per_batch),
        d_normal_mean=_nanmean(x.d_normal for x in per_batch),
        d_abnormal_mean=_nanmean(x.d_abnormal for x in per_batch),
        val_auc=val_auc,
        batches=per_batch,
    )
    log.info("epoch %d loss %.5f kmax %.5f val_auc %.4f", m.epoch, m.loss_total, m.loss_kmax, val_auc)
    return m


def fit(
    train_videos: list[VideoSample] | TrainingSet,
    config: TrainConfig,
    val_videos: list[VideoSample] | None = None,
    state: TrainState | None = None,
    on_epoch: Callable[[TrainState, EpochMetrics], None] | None = None,
) -> tuple[TrainState, list[EpochMetrics]]:
    """Train until ``state.epoch == config.epochs``; resumes from ``state`` if given."""
    data = train_videos if isinstance(train_videos, TrainingSet) else \
        prepare_training_set(train_videos, config.segments, config.sim_threshold)
    if state is None:
        state = init_state(config, data.feature_dim)
    history = []
    while state.epoch < config.epochs:
        m = train_epoch(state, data, config, val_videos)
        history.append(m)
        if on_epoch is not None:
            on_epoch(state, m)
    return state, history


def write_metrics_header(path: Path) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerow(METRIC_COLUMNS)


def append_metrics(path: Path, m: EpochMetrics) -> None:
    with open(path, "a", newline="") as fh:
        csv.writer(fh).writerow(m.row())
