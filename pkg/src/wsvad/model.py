"""FC + three-layer GCN scoring network with hand-written reverse-mode gradients.

Forward pass for one video (features ``F``, normalized adjacency ``A``)::

    X0 = relu(F W_fc + b_fc)
    H1 = drop(relu(A X0 W_g1 + b_g1))
    H2 = drop(relu(A H1 W_g2 + b_g2))
    s  = sigmoid(A H2 W_g3 + b_g3)

Every function also accepts a stack of equal-length videos, features of shape
``(B, T, D)`` with adjacency ``(B, T, T)``; weight gradients are then summed
over the stack.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterator

import numpy as np

from wsvad.errors import ShapeError
from wsvad.graph import Adjacency
from wsvad.numcore import check_finite, matmul

DEFAULT_WIDTHS = (512, 128, 32, 1)
TAP_LAYERS = ("fc", "gcn1", "gcn2")


@dataclass(frozen=True)
class ModelParams:
    w_fc: np.ndarray
    b_fc: np.ndarray
    w_g1: np.ndarray
    b_g1: np.ndarray
    w_g2: np.ndarray
    b_g2: np.ndarray
    w_g3: np.ndarray
    b_g3: np.ndarray

    @property
    def feature_dim(self) -> int:
        return self.w_fc.shape[0]

    @property
    def widths(self) -> tuple[int, int, int, int]:
        return (self.w_fc.shape[1], self.w_g1.shape[1], self.w_g2.shape[1], self.w_g3.shape[1])

    def blocks(self) -> Iterator[tuple[str, np.ndarray]]:
        for f in fields(self):
            yield f.name, getattr(self, f.name)

    def flatten(self) -> np.ndarray:
        return np.concatenate([b.ravel() for _, b in self.blocks()])

    def unflatten(self, vector: np.ndarray) -> "ModelParams":
        """A new params object of the same shapes filled from ``vector``."""
        out, pos = {}, 0
        for name, b in self.blocks():
            out[name] = np.asarray(vector[pos:pos + b.size], dtype=np.float64).reshape(b.shape).copy()
            pos += b.size
        if pos != vector.size:
            raise ShapeError(f"vector length {vector.size} does not match {pos} parameters")
        return ModelParams(**out)

    def map(self, fn, *others: "ModelParams") -> "ModelParams":
        return ModelParams(**{
            name: fn(b, *(getattr(o, name) for o in others)) for name, b in self.blocks()
        })


# Gradients share the parameter layout.
ParamGrads = ModelParams


def zeros_like(params: ModelParams) -> ModelParams:
    return params.map(np.zeros_like)


def init_params(
    feature_dim: int,
    rng: np.random.Generator,
    widths: tuple[int, int, int, int] = DEFAULT_WIDTHS,
) -> ModelParams:
    """Glorot-uniform weights, zero biases. Blocks are drawn in layer order."""
    if feature_dim < 1:
        raise ValueError(f"feature_dim must be >= 1, got {feature_dim}")
    dims = (feature_dim, *widths)
    ws, bs = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return ModelParams(ws[0], bs[0], ws[1], bs[1], ws[2], bs[2], ws[3], bs[3])


@dataclass
class ForwardTrace:
    features: np.ndarray
    adj: np.ndarray
    z0: np.ndarray
    x0: np.ndarray
    p1: np.ndarray
    h1: np.ndarray
    mask1: np.ndarray | None
    p2: np.ndarray
    h2: np.ndarray
    mask2: np.ndarray | None
    p3: np.ndarray
    scores: np.ndarray
    training: bool

    def tap(self, layer: str = "gcn1") -> np.ndarray:
        if layer == "fc":
            return self.x0
        if layer == "gcn1":
            return self.h1
        if layer == "gcn2":
            return self.h2
        raise ValueError(f"unknown tap layer {layer!r}; expected one of {TAP_LAYERS}")


def _dense(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # (..., n) @ (n, m) as one GEMM over the flattened leading axes
    lead = x.shape[:-1]
    return matmul(x.reshape(-1, x.shape[-1]), w).reshape(*lead, w.shape[1])


def _weight_grad(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    return x.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])


def _bias_grad(g: np.ndarray) -> np.ndarray:
    return g.reshape(-1, g.shape[-1]).sum(axis=0)


def _dropout_mask(shape, p: float, rng: np.random.Generator) -> np.ndarray:
    return (rng.random(shape) >= p) / (1.0 - p)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def forward(
    params: ModelParams,
    features: np.ndarray,
    adj: Adjacency | np.ndarray,
    training: bool = False,
    dropout_p: float = 0.0,
    rng: np.random.Generator | None = None,
) -> ForwardTrace:
    a = adj.matrix if isinstance(adj, Adjacency) else np.asarray(adj, dtype=np.float64)
    f = np.asarray(features, dtype=np.float64)
    if f.shape[-1] != params.feature_dim:
        raise ShapeError(f"feature dim {f.shape[-1]} != model feature dim {params.feature_dim}")
    t = f.shape[-2]
    if a.shape[-2:] != (t, t) or a.shape[:-2] not in ((), f.shape[:-2]):
        raise ShapeError(f"adjacency shape {a.shape} does not fit features {f.shape}")
    if not 0.0 <= dropout_p < 1.0:
        raise ValueError(f"dropout_p must lie in [0, 1), got {dropout_p}")
    check_finite(f, "features")
    use_dropout = training and dropout_p > 0.0
    if use_dropout and rng is None:
        raise ValueError("training with dropout needs an rng")

    z0 = _dense(f, params.w_fc) + params.b_fc
    x0 = np.maximum(z0, 0.0)
    p1 = matmul(a, _dense(x0, params.w_g1)) + params.b_g1
    h1 = np.maximum(p1, 0.0)
    mask1 = None
    if use_dropout:
        mask1 = _dropout_mask(h1.shape, dropout_p, rng)
        h1 = h1 * mask1
    p2 = matmul(a, _dense(h1, params.w_g2)) + params.b_g2
    h2 = np.maximum(p2, 0.0)
    mask2 = None
    if use_dropout:
        mask2 = _dropout_mask(h2.shape, dropout_p, rng)
        h2 = h2 * mask2
    p3 = matmul(a, _dense(h2, params.w_g3)) + params.b_g3
    scores = _sigmoid(p3[..., 0])
    return ForwardTrace(f, a, z0, x0, p1, h1, mask1, p2, h2, mask2, p3, scores, training)


def backward(
    trace: ForwardTrace,
    params: ModelParams,
    grad_scores: np.ndarray,
    grad_tap: np.ndarray | None = None,
    tap: str = "gcn1",
) -> ModelParams:
    """Gradients of ``<grad_scores, s> + <grad_tap, tap output>`` for every parameter.

    Dropout masks are replayed from ``trace``.
    """
    if trace.x0.shape[-1] != params.w_fc.shape[1] or trace.h2.shape[-1] != params.w_g3.shape[0] \
            or trace.features.shape[-1] != params.feature_dim:
        raise ShapeError("trace was not produced with parameters of these shapes")
    gs = np.asarray(grad_scores, dtype=np.float64)
    if gs.shape != trace.scores.shape:
        raise ShapeError(f"grad_scores shape {gs.shape} != scores shape {trace.scores.shape}")
    if tap not in TAP_LAYERS:
        raise ValueError(f"unknown tap layer {tap!r}")
    if grad_tap is not None and grad_tap.shape != trace.tap(tap).shape:
        raise ShapeError(f"grad_tap shape {grad_tap.shape} != tap shape {trace.tap(tap).shape}")

    at = np.swapaxes(trace.adj, -1, -2)
    s = trace.scores

    g_p3 = (gs * s * (1.0 - s))[..., None]
    g_u3 = at @ g_p3
    g_w3 = _weight_grad(trace.h2, g_u3)
    g_b3 = _bias_grad(g_p3)
    g_h2 = g_u3 @ params.w_g3.T
    if grad_tap is not None and tap == "gcn2":
        g_h2 = g_h2 + grad_tap

    g_p2 = g_h2 * (trace.p2 > 0)
    if trace.mask2 is not None:
        g_p2 = g_p2 * trace.mask2
    g_u2 = at @ g_p2
    g_w2 = _weight_grad(trace.h1, g_u2)
    g_b2 = _bias_grad(g_p2)
    g_h1 = _dense(g_u2, params.w_g2.T)
    if grad_tap is not None and tap == "gcn1":
        g_h1 = g_h1 + grad_tap

    g_p1 = g_h1 * (trace.p1 > 0)
    if trace.mask1 is not None:
        g_p1 = g_p1 * trace.mask1
    g_u1 = at @ g_p1
    g_w1 = _weight_grad(trace.x0, g_u1)
    g_b1 = _bias_grad(g_p1)
    g_x0 = _dense(g_u1, params.w_g1.T)
    if grad_tap is not None and tap == "fc":
        g_x0 = g_x0 + grad_tap

    g_z0 = g_x0 * (trace.z0 > 0)
    g_w0 = _weight_grad(trace.features, g_z0)
    g_b0 = _bias_grad(g_z0)

    grads = ModelParams(g_w0, g_b0, g_w1, g_b1, g_w2, g_b2, g_w3, g_b3)
    for name, g in grads.blocks():
        check_finite(g, f"gradient {name}")
    return grads
