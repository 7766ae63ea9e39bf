"""Finite-difference verification of every backward path on a tiny random instance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from wsvad.clustering import ClusterResult, RandomPair, kmeans2
from wsvad.graph import build_adjacency
from wsvad.losses import HyperParams, batch_cluster_loss, center_grad_to_points, kmax_loss
from wsvad.model import TAP_LAYERS, ModelParams, backward, forward, init_params
from wsvad.numcore import finite_diff_check, l2_normalize_rows, l2_normalize_rows_backward, make_rng


@dataclass
class GradcheckReport:
    errors: dict[str, dict[str, float]]  # check name -> block name -> max rel error
    tol: float

    @property
    def worst(self) -> float:
        return max(e for per in self.errors.values() for e in per.values())

    @property
    def passed(self) -> bool:
        return self.worst < self.tol

    def lines(self) -> list[str]:
        out = []
        for check, per in self.errors.items():
            for block, err in per.items():
                flag = "ok" if err < self.tol else "FAIL"
                out.append(f"{check:<16} {block:<6} {err:.3e} {flag}")
        return out


def _block_errors(params: ModelParams, f, grads: ModelParams, h: float) -> dict[str, float]:
    out = {}
    for name, block in params.blocks():
        def f_block(values, name=name):
            return f(ModelParams(**{n: (values if n == name else b) for n, b in params.blocks()}))
        out[name] = finite_diff_check(f_block, block, getattr(grads, name), h)
    return out


def _frozen_cluster_loss(raw: np.ndarray, res: ClusterResult, cls: str, hp: HyperParams) -> float:
    pts = l2_normalize_rows(raw)
    centers = np.vstack([pts[res.assignments == k].mean(axis=0) for k in (0, 1)])
    frozen = ClusterResult(res.assignments, centers, float(np.linalg.norm(centers[0] - centers[1])),
                           0.0, 0, res.counts)
    return batch_cluster_loss(frozen, cls, hp)[0]


def run_gradcheck(
    segments: int = 4,
    feature_dim: int = 5,
    widths: tuple[int, int, int, int] = (8, 6, 4, 1),
    videos_per_class: int = 2,
    seed: int = 0,
    h: float = 1e-5,
    tol: float = 1e-6,
    hp: HyperParams | None = None,
) -> GradcheckReport:
    hp = hp or HyperParams(lambda1=0.5, batch_size=2 * videos_per_class)
    rng = make_rng(seed)
    params = init_params(feature_dim, rng, widths)
    # non-zero biases so every bias path is exercised away from its initial value
    params = params.map(lambda b: b + (rng.normal(scale=0.1, size=b.shape) if b.ndim == 1 else 0.0))
    b = 2 * videos_per_class
    feats = rng.normal(size=(b, segments, feature_dim))
    adj = np.stack([build_adjacency(f).matrix for f in feats])
    labels = np.array([0] * videos_per_class + [1] * videos_per_class)

    def fwd(p):
        return forward(p, feats, adj, training=False)

    base = fwd(params)
    errors: dict[str, dict[str, float]] = {}

    g_scores = rng.normal(size=base.scores.shape)
    grads = backward(base, params, g_scores)
    errors["scores"] = _block_errors(params, lambda p: float(np.sum(g_scores * fwd(p).scores)), grads, h)

    for tap in TAP_LAYERS:
        g_tap = rng.normal(size=base.tap(tap).shape)
        grads = backward(base, params, np.zeros_like(base.scores), g_tap, tap)
        errors[f"tap:{tap}"] = _block_errors(
            params, lambda p, tap=tap, g=g_tap: float(np.sum(g * fwd(p).tap(tap))), grads, h)

    # full objective: mean k-max + lambda1 * (normal + abnormal cluster loss), assignments frozen
    half = videos_per_class
    rows = {"normal": slice(0, half), "abnormal": slice(half, b)}
    tap_base = base.tap("gcn1")
    results = {}
    for cls, sl in rows.items():
        raw = tap_base[sl].reshape(-1, tap_base.shape[-1])
        results[cls] = kmeans2(l2_normalize_rows(raw), RandomPair(), rng)

    def objective(p):
        tr = fwd(p)
        kmax = math.fsum(kmax_loss(tr.scores[i], int(labels[i]))[0] for i in range(b)) / b
        bc = 0.0
        for cls, sl in rows.items():
            raw = tr.tap("gcn1")[sl].reshape(-1, tap_base.shape[-1])
            bc += _frozen_cluster_loss(raw, results[cls], cls, hp)
        return kmax + hp.lambda1 * bc

    g_s = np.stack([kmax_loss(base.scores[i], int(labels[i]))[1] / b for i in range(b)])
    g_tap = np.zeros_like(tap_base)
    for cls, sl in rows.items():
        raw = tap_base[sl].reshape(-1, tap_base.shape[-1])
        _, gc = batch_cluster_loss(results[cls], cls, hp)
        g_pts = center_grad_to_points(results[cls], gc)
        g_tap[sl] = hp.lambda1 * l2_normalize_rows_backward(raw, g_pts).reshape(tap_base[sl].shape)
    grads = backward(base, params, g_s, g_tap, "gcn1")
    errors["total_loss"] = _block_errors(params, objective, grads, h)
    return GradcheckReport(errors, tol)
