"""Dense float64 matrix helpers and a central-difference gradient checker.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 in C (row-major)
order. Random streams come from :func:`make_rng`, a PCG64 generator, whose
output for a given seed is identical on every platform numpy supports.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from wsvad.errors import NumericalError, ShapeError

DEFAULT_EPS = 1e-12


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    check_finite(a, name)
    return a


def check_finite(a: np.ndarray, what: str = "value") -> None:
    if not np.all(np.isfinite(a)):
        raise NumericalError(f"non-finite entries in {what}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with a dimension check and a finiteness check on the result.

    Leading (batch) axes broadcast as in ``numpy.matmul``.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    out = a @ b
    check_finite(out, "matmul result")
    return out


def l2_normalize_rows(m: np.ndarray, epsilon: float = DEFAULT_EPS) -> np.ndarray:
    norms = np.linalg.norm(m, axis=-1, keepdims=True)
    return m / np.maximum(norms, epsilon)


def l2_normalize_rows_backward(
    m: np.ndarray, grad_out: np.ndarray, epsilon: float = DEFAULT_EPS
) -> np.ndarray:
    """Pull a cotangent on ``l2_normalize_rows(m)`` back to ``m``."""
    norms = np.linalg.norm(m, axis=-1, keepdims=True)
    big = norms >= epsilon
    safe = np.where(big, norms, epsilon)
    x = m / safe
    radial = np.sum(x * grad_out, axis=-1, keepdims=True)
    return np.where(big, (grad_out - x * radial) / safe, grad_out / epsilon)


def finite_diff_check(
    f: Callable[[np.ndarray], float],
    point: np.ndarray,
    analytic_grad: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Max relative error between ``analytic_grad`` and a central-difference gradient.

    The error per coordinate is ``|fd - an| / max(1, |fd|, |an|)``.
    """
    x = np.array(point, dtype=np.float64).ravel()
    an = np.asarray(analytic_grad, dtype=np.float64).ravel()
    if an.shape != x.shape:
        raise ShapeError(f"gradient shape {an.shape} does not match point shape {x.shape}")
    worst = 0.0
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + h
        fp = float(f(x.reshape(np.shape(point))))
        x[i] = orig - h
        fm = float(f(x.reshape(np.shape(point))))
        x[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericalError(f"non-finite function value at coordinate {i}")
        fd = (fp - fm) / (2.0 * h)
        err = abs(fd - an[i]) / max(1.0, abs(fd), abs(an[i]))
        worst = max(worst, err)
    return worst
