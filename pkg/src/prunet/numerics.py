"""Dense float64 vectors/matrices, element-wise activations, and a
finite-difference gradient oracle.

All numeric containers in the library are plain numpy float64 arrays;
the constructors here validate shape and finiteness once at the
boundary, and every public operation either returns finite values or
raises. Everything is pure, so concurrent callers are safe.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NumericError, ShapeError

SIGMOID = "sigmoid"
TANH = "tanh"
RELU = "relu"
IDENTITY = "identity"
SOFTMAX = "softmax"

ACTIVATION_KINDS = (SIGMOID, TANH, RELU, IDENTITY, SOFTMAX)


def vector(data) -> np.ndarray:
    """Build a 1-D float64 vector, rejecting non-finite entries."""
    v = np.asarray(data, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ShapeError(f"vector must be 1-D and non-empty, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NumericError("vector contains non-finite entries")
    return v


def matrix(data) -> np.ndarray:
    """Build a 2-D float64 matrix, rejecting non-finite entries."""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ShapeError(f"matrix must be 2-D and non-empty, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError("matrix contains non-finite entries")
    return m


def affine(w: np.ndarray, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Compute w @ x + b with explicit shape checking.

    `x` may be a vector of length q, or a (q, n) matrix whose columns are
    independent inputs (the bias then broadcasts across columns).
    """
    if w.ndim != 2:
        raise ShapeError(f"weight must be 2-D, got shape {w.shape}")
    if w.shape[1] != x.shape[0]:
        raise ShapeError(f"affine mismatch: weight {w.shape} vs input {x.shape}")
    if w.shape[0] != b.shape[0]:
        raise ShapeError(f"affine mismatch: weight {w.shape} vs bias {b.shape}")
    if x.ndim == 1:
        out = w @ x + b
    else:
        out = w @ x + b[:, None]
    if not np.all(np.isfinite(out)):
        raise NumericError("affine produced non-finite output")
    return out


def sigmoid(v: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def softmax(v: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax; for 2-D input, normalizes each column."""
    shifted = v - v.max(axis=0, keepdims=v.ndim > 1)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=v.ndim > 1)


def apply_activation(kind: str, v: np.ndarray) -> np.ndarray:
    """Apply an activation element-wise (softmax acts on the full vector)."""
    if not np.all(np.isfinite(v)):
        raise NumericError("activation input contains non-finite entries")
    if kind == SIGMOID:
        return sigmoid(v)
    if kind == TANH:
        return np.tanh(v)
    if kind == RELU:
        return np.maximum(v, 0.0)
    if kind == IDENTITY:
        return np.array(v, dtype=np.float64, copy=True)
    if kind == SOFTMAX:
        return softmax(v)
    raise ValueError(f"unknown activation kind {kind!r}")


def activation_deriv_from_output(kind: str, y: np.ndarray) -> np.ndarray:
    """Element-wise derivative expressed through the activation output.

    relu's derivative at exactly 0 is taken as 0. softmax has no
    element-wise derivative; its gradient is fused into the
    cross-entropy backward pass instead.
    """
    if kind == SIGMOID:
        return y * (1.0 - y)
    if kind == TANH:
        return 1.0 - y * y
    if kind == RELU:
        return (y > 0).astype(np.float64)
    if kind == IDENTITY:
        return np.ones_like(y)
    raise ValueError(f"no element-wise derivative for activation {kind!r}")


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x0: np.ndarray, eps: float
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a vector.

    Component i is (f(x0 + eps e_i) - f(x0 - eps e_i)) / (2 eps). This is
    the independent oracle that every analytic gradient in the library is
    verified against.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.empty_like(x0)
    for i in range(x0.size):
        step = np.zeros_like(x0)
        step[i] = eps
        hi = f(x0 + step)
        lo = f(x0 - step)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericError(f"function not finite near component {i}")
        grad[i] = (hi - lo) / (2.0 * eps)
    return grad
