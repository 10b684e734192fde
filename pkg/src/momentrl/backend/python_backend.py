"""Pure-numpy implementations of the hot numeric kernels.

Shared contract with the compiled backend: float64, C-contiguous arrays;
backward kernels *accumulate* into the gradient buffers they are handed.
Activation codes: 0 identity, 1 relu, 2 sigmoid, 3 softplus.
"""

from __future__ import annotations

import numpy as np

ACT_IDENTITY = 0
ACT_RELU = 1
ACT_SIGMOID = 2
ACT_SOFTPLUS = 3


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form avoids overflow for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def dense_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray, act: int) -> np.ndarray:
    """activation(x @ w.T + b) for a row batch x of shape [T, n]."""
    y = x @ w.T
    y += b
    if act == ACT_RELU:
        np.maximum(y, 0.0, out=y)
    elif act == ACT_SIGMOID:
        y = _sigmoid(y)
    elif act == ACT_SOFTPLUS:
        y = np.logaddexp(0.0, y)
    return y


def _act_deriv_from_output(y: np.ndarray, act: int) -> np.ndarray | None:
    if act == ACT_IDENTITY:
        return None
    if act == ACT_RELU:
        return (y > 0.0).astype(np.float64)
    if act == ACT_SIGMOID:
        return y * (1.0 - y)
    return 1.0 - np.exp(-y)  # softplus


def dense_bwd(
    x: np.ndarray,
    w: np.ndarray,
    y: np.ndarray,
    gy: np.ndarray,
    act: int,
    gx: np.ndarray,
    gw: np.ndarray,
    gb: np.ndarray,
) -> None:
    d = _act_deriv_from_output(y, act)
    gpre = gy if d is None else gy * d
    gw += gpre.T @ x
    gb += gpre.sum(axis=0)
    gx += gpre @ w


def gru_fwd(
    x: np.ndarray,
    h_prev: np.ndarray,
    w: np.ndarray,
    u: np.ndarray,
    b: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One gated-recurrent step; returns (z, r, c, h_new).

    Weights are stacked as three blocks of rows (update gate, reset gate,
    candidate): w is [3h, n], u is [3h, h], b is [3h]. The candidate's
    recurrent term sees the reset-gated previous state, and
    h_new = (1 - z) * c + z * h_prev.
    """
    h = h_prev.shape[0]
    pre = w @ x + b
    pre[: 2 * h] += u[: 2 * h] @ h_prev
    z = _sigmoid(pre[:h])
    r = _sigmoid(pre[h : 2 * h])
    c = np.tanh(pre[2 * h :] + u[2 * h :] @ (r * h_prev))
    h_new = (1.0 - z) * c + z * h_prev
    return z, r, c, h_new


def gru_bwd(
    x: np.ndarray,
    h_prev: np.ndarray,
    z: np.ndarray,
    r: np.ndarray,
    c: np.ndarray,
    w: np.ndarray,
    u: np.ndarray,
    gh: np.ndarray,
    gx: np.ndarray,
    gh_prev: np.ndarray,
    gw: np.ndarray,
    gu: np.ndarray,
    gb: np.ndarray,
) -> None:
    h = h_prev.shape[0]
    rh = r * h_prev
    gc_pre = gh * (1.0 - z) * (1.0 - c * c)
    grh = u[2 * h :].T @ gc_pre
    gpre = np.empty(3 * h)
    gpre[:h] = gh * (h_prev - c) * z * (1.0 - z)
    gpre[h : 2 * h] = grh * h_prev * r * (1.0 - r)
    gpre[2 * h :] = gc_pre

    gw += np.outer(gpre, x)
    gb += gpre
    gu[: 2 * h] += np.outer(gpre[: 2 * h], h_prev)
    gu[2 * h :] += np.outer(gc_pre, rh)
    gh_prev += gh * z + grh * r
    gh_prev += u[: 2 * h].T @ gpre[: 2 * h]
    gx += w.T @ gpre


def adam_step(
    p: np.ndarray,
    g: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    bc1: float,
    bc2: float,
    gscale: float,
) -> None:
    """Bias-corrected adaptive-moment update, in place over flat buffers.

    ``gscale`` folds global-norm clipping into the raw gradient; ``bc1`` and
    ``bc2`` are the step's bias-correction denominators 1 - beta^t.
    """
    ge = g if gscale == 1.0 else g * gscale
    m *= beta1
    m += (1.0 - beta1) * ge
    v *= beta2
    v += (1.0 - beta2) * (ge * ge)
    mhat = m / bc1
    vhat = v / bc2
    p -= lr * mhat / (np.sqrt(vhat) + eps)
