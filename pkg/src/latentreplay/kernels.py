"""Dense-tensor kernels.

All kernels take and return float32 arrays but accumulate contractions
in float64, so finite-difference gradient checks at 1e-3 relative
tolerance stay meaningful. Plain loops/einsum only; reduction order is
fixed, so outputs are bit-identical across repeated calls.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product [m,k] x [k,n] -> [m,n], float64 accumulation."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects rank-2 operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner extents differ: {a.shape} x {b.shape}")
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(np.float32)


def conv_out_extent(size: int, k: int, stride: int, pad: int) -> int:
    span = size + 2 * pad - k
    if span < 0 or span % stride != 0:
        raise ShapeError(
            f"non-integral output extent: size={size} kernel={k} stride={stride} pad={pad}"
        )
    return span // stride + 1


def conv2d(x: np.ndarray, kern: np.ndarray, stride: int = 1, pad: int = 0,
           groups: int = 1) -> np.ndarray:
    """Grouped 2-D cross-correlation.

    x: [n, c, h, w]; kern: [f, c/groups, kh, kw]. groups == c with a
    single-channel kernel gives a depthwise convolution.
    """
    n, c, h, w = x.shape
    f, c_g, kh, kw = kern.shape
    if c % groups or f % groups:
        raise ShapeError(f"groups={groups} must divide channels c={c} and filters f={f}")
    if c_g != c // groups:
        raise ShapeError(f"kernel expects {c_g} channels/group, input has {c // groups}")
    ho = conv_out_extent(h, kh, stride, pad)
    wo = conv_out_extent(w, kw, stride, pad)

    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    win = win.reshape(n, groups, c_g, ho, wo, kh, kw).astype(np.float64)
    kg = kern.reshape(groups, f // groups, c_g, kh, kw).astype(np.float64)
    out = np.einsum("ngchwij,gfcij->ngfhw", win, kg)
    return out.reshape(n, f, ho, wo).astype(np.float32)


def conv2d_backward(x: np.ndarray, kern: np.ndarray, dy: np.ndarray,
                    stride: int = 1, pad: int = 0, groups: int = 1):
    """Gradients (dx, dkern) of conv2d for upstream gradient dy."""
    n, c, h, w = x.shape
    f, c_g, kh, kw = kern.shape
    f_g = f // groups
    _, _, ho, wo = dy.shape
    dyg = dy.reshape(n, groups, f_g, ho, wo).astype(np.float64)

    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    win = win.reshape(n, groups, c_g, ho, wo, kh, kw).astype(np.float64)
    dkern = np.einsum("ngchwij,ngfhw->gfcij", win, dyg).reshape(f, c_g, kh, kw)

    kg = kern.reshape(groups, f_g, c_g, kh, kw).astype(np.float64)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            contrib = np.einsum("ngfhw,gfc->ngchw", dyg, kg[:, :, :, i, j])
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += (
                contrib.reshape(n, c, ho, wo)
            )
    dx = dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp
    return dx.astype(np.float32), dkern.astype(np.float32)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """[n, c, h, w] -> [n, c] per-channel spatial mean."""
    if x.ndim != 4:
        raise ShapeError(f"expected [n,c,h,w], got {x.shape}")
    return x.astype(np.float64).mean(axis=(2, 3)).astype(np.float32)


def global_avg_pool_backward(dy: np.ndarray, h: int, w: int) -> np.ndarray:
    n, c = dy.shape
    g = dy.astype(np.float64) / (h * w)
    return np.broadcast_to(g[:, :, None, None], (n, c, h, w)).astype(np.float32)


def softmax_xent(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch with max-stabilized softmax.

    Returns (loss, dlogits) with dlogits = (softmax - onehot) / n.
    """
    if logits.ndim != 2:
        raise ShapeError(f"expected [n, classes] logits, got {logits.shape}")
    n, c = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if labels.min(initial=0) < 0 or (n and labels.max() >= c):
        raise IndexError(f"label out of range for {c} classes")
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(-logp[np.arange(n), labels].mean())
    d = np.exp(logp)
    d[np.arange(n), labels] -= 1.0
    return loss, (d / n).astype(np.float32)
