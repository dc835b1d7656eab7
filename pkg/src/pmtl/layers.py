"""Differentiable layer primitives with hand-written backward passes.

All tensors are float64 numpy arrays; matrices are row-major with samples
in rows. Each ``*_forward`` returns ``(output, cache)`` and the matching
``*_backward`` consumes that cache, so no global state or autodiff graph
is involved. Gradients here are exact analytic derivatives; they are
cross-checked against central finite differences in the test suite.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ShapeError


def as_matrix(a, name="matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(name, a.shape)
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with explicit shape validation."""
    a = as_matrix(a, "matmul lhs")
    b = as_matrix(b, "matmul rhs")
    if a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    return a @ b


# -- linear -----------------------------------------------------------------


class LinearCache(NamedTuple):
    x: np.ndarray
    w: np.ndarray


def linear_forward(x, w, b):
    """y = x @ w + b, bias broadcast over rows.

    x: (n, d_in), w: (d_in, d_out), b: (d_out,).
    """
    x = as_matrix(x, "linear input")
    w = as_matrix(w, "linear weight")
    b = np.asarray(b, dtype=np.float64)
    if x.shape[1] != w.shape[0]:
        raise ShapeError("linear_forward", x.shape, w.shape)
    if b.shape != (w.shape[1],):
        raise ShapeError("linear_forward bias", b.shape, w.shape)
    return x @ w + b, LinearCache(x, w)


def linear_backward(cache: LinearCache, dy):
    """Gradients of linear_forward: dx = dy wᵀ, dw = xᵀ dy, db = Σ_rows dy."""
    dy = as_matrix(dy, "linear upstream grad")
    x, w = cache
    if dy.shape != (x.shape[0], w.shape[1]):
        raise ShapeError("linear_backward", dy.shape, (x.shape[0], w.shape[1]))
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


# -- layer normalization ----------------------------------------------------


class LayerNormCache(NamedTuple):
    xhat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray


def layer_norm_forward(x, gamma, beta, eps=1e-5):
    """Per-row normalization to zero mean / unit variance, then affine.

    Uses the population (1/d) variance; eps is added inside the square
    root, so a constant row maps to zeros rather than dividing by zero.
    """
    x = as_matrix(x, "layer_norm input")
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    d = x.shape[1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError("layer_norm_forward affine", gamma.shape, x.shape)
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be > 0, got {eps}")
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    return gamma * xhat + beta, LayerNormCache(xhat, inv_std, gamma)


def layer_norm_backward(cache: LayerNormCache, dy):
    """Gradients of layer_norm_forward.

    With x̂ the normalized rows and s the per-row 1/√(var+eps):

        dγ = Σ_rows dy·x̂          dβ = Σ_rows dy
        dx = s · (g − mean(g) − x̂ · mean(g·x̂)),   g = dy·γ

    The mean terms come from differentiating through the row mean and
    (population) variance.
    """
    dy = as_matrix(dy, "layer_norm upstream grad")
    xhat, inv_std, gamma = cache
    if dy.shape != xhat.shape:
        raise ShapeError("layer_norm_backward", dy.shape, xhat.shape)
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    g = dy * gamma
    dx = inv_std * (
        g
        - g.mean(axis=1, keepdims=True)
        - xhat * (g * xhat).mean(axis=1, keepdims=True)
    )
    return dx, dgamma, dbeta


# -- activations ------------------------------------------------------------


class LeakyReluCache(NamedTuple):
    scale: np.ndarray


def leaky_relu_forward(x, slope=0.01):
    """y = x for x >= 0, slope*x otherwise. slope must lie in (0, 1)."""
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky_relu slope must be in (0, 1), got {slope}")
    x = np.asarray(x, dtype=np.float64)
    scale = np.where(x >= 0.0, 1.0, slope)
    return x * scale, LeakyReluCache(scale)


def leaky_relu_backward(cache: LeakyReluCache, dy):
    dy = np.asarray(dy, dtype=np.float64)
    if dy.shape != cache.scale.shape:
        raise ShapeError("leaky_relu_backward", dy.shape, cache.scale.shape)
    return dy * cache.scale


class SigmoidCache(NamedTuple):
    y: np.ndarray


def sigmoid_forward(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    y = np.empty_like(x)
    pos = x >= 0.0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return y, SigmoidCache(y)


def sigmoid_backward(cache: SigmoidCache, dy):
    dy = np.asarray(dy, dtype=np.float64)
    y = cache.y
    if dy.shape != y.shape:
        raise ShapeError("sigmoid_backward", dy.shape, y.shape)
    return dy * y * (1.0 - y)
