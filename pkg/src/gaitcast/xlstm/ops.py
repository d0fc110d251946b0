"""Differentiable primitives: each op has a forward returning (output,
cache) and a matching backward taking (grad_output, cache).

Arrays are float64. Shapes are batch-first: sequences are [B x T x C].
"""

from __future__ import annotations

import numpy as np

LN_EPS = 1e-6


# ---------------------------------------------------------------------------
# Dense and block-diagonal linear maps


def linear_fwd(x, w, b):
    """y = x @ w.T + b with w [Dout x Din]."""
    return x @ w.T + b, (x, w)


def linear_bwd(dy, cache):
    x, w = cache
    dx = dy @ w
    dw = dy.reshape(-1, dy.shape[-1]).T @ x.reshape(-1, x.shape[-1])
    db = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    return dx, dw, db


def block_diagonal_apply(x, weights, heads=None):
    """Per-head linear map with no cross-head mixing.

    weights is [heads x dh_out x dh_in]; the trailing axis of x is split
    into `heads` equal slices and each slice is mapped by its own matrix.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 3:
        raise ValueError("weights must be [heads x dh_out x dh_in]")
    n_heads = weights.shape[0]
    if heads is not None and heads != n_heads:
        raise ValueError(f"heads={heads} but weights carry {n_heads} blocks")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] % n_heads != 0 or x.shape[-1] // n_heads != weights.shape[2]:
        raise ValueError(
            f"input dim {x.shape[-1]} incompatible with {n_heads} heads of "
            f"input size {weights.shape[2]}")
    y, _ = block_diag_fwd(x, weights)
    return y


def block_diag_fwd(x, w):
    """w [heads x dh_out x dh_in]; x trailing dim = heads * dh_in."""
    heads, dh_out, dh_in = w.shape
    xh = x.reshape(*x.shape[:-1], heads, dh_in)
    yh = np.einsum("...hi,hoi->...ho", xh, w)
    return yh.reshape(*x.shape[:-1], heads * dh_out), (xh, w)


def block_diag_bwd(dy, cache):
    xh, w = cache
    heads, dh_out, dh_in = w.shape
    dyh = dy.reshape(*dy.shape[:-1], heads, dh_out)
    dxh = np.einsum("...ho,hoi->...hi", dyh, w)
    dw = np.einsum("bho,bhi->hoi", dyh.reshape(-1, heads, dh_out),
                   xh.reshape(-1, heads, dh_in))
    return dxh.reshape(*dy.shape[:-1], heads * dh_in), dw


# ---------------------------------------------------------------------------
# Causal depthwise convolution


def causal_conv(x, w, b=None):
    """Depthwise causal convolution over time.

    x [B x T x C], w [C x K]: y[:, t, c] = sum_k w[c, k] * x[:, t-k, c],
    with zero left-padding so the output has the input's length.
    """
    y, _ = causal_conv_fwd(np.asarray(x, dtype=np.float64),
                           np.asarray(w, dtype=np.float64),
                           np.zeros(w.shape[0]) if b is None else b)
    return y


def causal_conv_fwd(x, w, b):
    n_batch, n_time, n_ch = x.shape
    kernel = w.shape[1]
    xp = np.pad(x, ((0, 0), (kernel - 1, 0), (0, 0)))
    y = np.zeros_like(x)
    for k in range(kernel):
        y += w[:, k] * xp[:, kernel - 1 - k: kernel - 1 - k + n_time, :]
    return y + b, (xp, w, x.shape)


def causal_conv_bwd(dy, cache):
    xp, w, x_shape = cache
    _n_batch, n_time, _n_ch = x_shape
    kernel = w.shape[1]
    dw = np.empty_like(w)
    dxp = np.zeros_like(xp)
    for k in range(kernel):
        sl = slice(kernel - 1 - k, kernel - 1 - k + n_time)
        dw[:, k] = np.sum(dy * xp[:, sl, :], axis=(0, 1))
        dxp[:, sl, :] += w[:, k] * dy
    db = dy.sum(axis=(0, 1))
    return dxp[:, kernel - 1:, :], dw, db


# ---------------------------------------------------------------------------
# Normalization


def layernorm_fwd(x, gamma, beta):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return xhat * gamma + beta, (xhat, inv, gamma)


def layernorm_bwd(dy, cache):
    xhat, inv, gamma = cache
    n = xhat.shape[-1]
    dgamma = np.sum(dy * xhat, axis=tuple(range(dy.ndim - 1)))
    dbeta = np.sum(dy, axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * gamma
    dx = inv / n * (n * dxhat - dxhat.sum(axis=-1, keepdims=True)
                    - xhat * np.sum(dxhat * xhat, axis=-1, keepdims=True))
    return dx, dgamma, dbeta


def groupnorm_fwd(x, gamma, beta, groups):
    """Normalize within channel groups, per position; affine per channel."""
    n_ch = x.shape[-1]
    if n_ch % groups != 0:
        raise ValueError(f"{n_ch} channels not divisible by {groups} groups")
    xg = x.reshape(*x.shape[:-1], groups, n_ch // groups)
    mu = xg.mean(axis=-1, keepdims=True)
    var = xg.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = ((xg - mu) * inv).reshape(x.shape)
    return xhat * gamma + beta, (xhat, inv, gamma, groups)


def groupnorm_bwd(dy, cache):
    xhat, inv, gamma, groups = cache
    n_ch = dy.shape[-1]
    dh = n_ch // groups
    dgamma = np.sum(dy * xhat, axis=tuple(range(dy.ndim - 1)))
    dbeta = np.sum(dy, axis=tuple(range(dy.ndim - 1)))
    dxhat = (dy * gamma).reshape(*dy.shape[:-1], groups, dh)
    xhat_g = xhat.reshape(*dy.shape[:-1], groups, dh)
    dxg = inv / dh * (dh * dxhat - dxhat.sum(axis=-1, keepdims=True)
                      - xhat_g * np.sum(dxhat * xhat_g, axis=-1, keepdims=True))
    return dxg.reshape(dy.shape), dgamma, dbeta


# ---------------------------------------------------------------------------
# Activations


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu_fwd(x):
    s = sigmoid(x)
    return x * s, (x, s)


def silu_bwd(dy, cache):
    x, s = cache
    return dy * (s + x * s * (1.0 - s))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu_fwd(x):
    """Tanh-approximation GELU (backward differentiates the approximation)."""
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    return 0.5 * x * (1.0 + t), (x, t)


def gelu_bwd(dy, cache):
    x, t = cache
    dinner = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * dinner)
