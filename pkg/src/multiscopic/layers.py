"""Minimal 3-D network primitives on (C, D, H, W) arrays.

Each op comes as a forward function returning (output, cache) and a matching
backward taking (grad_out, cache).  No autodiff: net.py wires these by hand.
All ops preserve the dtype of their inputs; reductions that feed scalar
losses happen in float64 at the call site.

Set DEBUG_NAN = True to assert every op output is finite (slow).
"""

from __future__ import annotations

import numpy as np

from .errors import InputError

DEBUG_NAN = False


def _check_finite(name: str, arr: np.ndarray):
    if DEBUG_NAN and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{name} produced non-finite values")


def conv3d_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, pad: int = 1
):
    """3-D convolution, kernel (C_out, C_in, k, k, k), zero padding.

    Internally im2col: patches are gathered into a (C_in*k^3, N) matrix so
    the convolution is one GEMM.  The column matrix is kept in the cache for
    the weight gradient.
    """
    c_in, d, h, wd = x.shape
    c_out, c_in2, k, k2, k3 = w.shape
    if c_in != c_in2 or not (k == k2 == k3):
        raise InputError(f"kernel {w.shape} does not fit input {x.shape}")
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (pad, pad)))
    d_out = (d + 2 * pad - k) // stride + 1
    h_out = (h + 2 * pad - k) // stride + 1
    w_out = (wd + 2 * pad - k) // stride + 1

    cols = np.empty((c_in, k, k, k, d_out, h_out, w_out), dtype=x.dtype)
    for dz in range(k):
        for dy in range(k):
            for dx in range(k):
                cols[:, dz, dy, dx] = xp[
                    :,
                    dz : dz + stride * d_out : stride,
                    dy : dy + stride * h_out : stride,
                    dx : dx + stride * w_out : stride,
                ]
    cols = cols.reshape(c_in * k * k * k, d_out * h_out * w_out)
    out = (w.reshape(c_out, -1) @ cols).reshape(c_out, d_out, h_out, w_out)
    out += b[:, None, None, None]
    _check_finite("conv3d", out)
    cache = (x.shape, w, stride, pad, cols)
    return out, cache


def conv3d_backward(grad_out: np.ndarray, cache):
    """Returns (dx, dw, db) for conv3d_forward."""
    x_shape, w, stride, pad, cols = cache
    c_in, d, h, wd = x_shape
    c_out = grad_out.shape[0]
    k = w.shape[2]
    d_out, h_out, w_out = grad_out.shape[1:]

    g = grad_out.reshape(c_out, -1)
    db = g.sum(axis=1)
    dw = (g @ cols.T).reshape(w.shape)
    dcols = (w.reshape(c_out, -1).T @ g).reshape(c_in, k, k, k, d_out, h_out, w_out)

    dxp = np.zeros((c_in, d + 2 * pad, h + 2 * pad, wd + 2 * pad), dtype=grad_out.dtype)
    for dz in range(k):
        for dy in range(k):
            for dx in range(k):
                dxp[
                    :,
                    dz : dz + stride * d_out : stride,
                    dy : dy + stride * h_out : stride,
                    dx : dx + stride * w_out : stride,
                ] += dcols[:, dz, dy, dx]
    dx = dxp[:, pad : pad + d, pad : pad + h, pad : pad + wd]
    return dx, dw, db


def relu_forward(x: np.ndarray):
    out = np.maximum(x, 0)
    return out, (x > 0)


def relu_backward(grad_out: np.ndarray, cache):
    return grad_out * cache


def upsample_nearest_forward(x: np.ndarray, target_shape: tuple[int, int, int]):
    """Nearest-neighbor x2 upsampling to an exact target (D, H, W).

    out[c, i, j, l] = x[c, i//2, j//2, l//2]; the target may be one short of
    2x the input on odd axes (the U-Net skip connection fixes the shape).
    """
    td, th, tw = target_shape
    sd, sh, sw = x.shape[1:]
    if not (sd <= td <= 2 * sd and sh <= th <= 2 * sh and sw <= tw <= 2 * sw):
        raise InputError(f"cannot upsample {x.shape[1:]} to {target_shape}")
    iz = np.arange(td) // 2
    iy = np.arange(th) // 2
    ix = np.arange(tw) // 2
    out = x[:, iz[:, None, None], iy[None, :, None], ix[None, None, :]]
    return out, x.shape


def upsample_nearest_backward(grad_out: np.ndarray, cache):
    c, sd, sh, sw = cache
    td, th, tw = grad_out.shape[1:]
    g = np.zeros((c, 2 * sd, 2 * sh, 2 * sw), dtype=grad_out.dtype)
    g[:, :td, :th, :tw] = grad_out
    return g.reshape(c, sd, 2, sh, 2, sw, 2).sum(axis=(2, 4, 6))


def concat_forward(xs: list[np.ndarray]):
    out = np.concatenate(xs, axis=0)
    return out, [x.shape[0] for x in xs]


def concat_backward(grad_out: np.ndarray, cache):
    splits = np.cumsum(cache)[:-1]
    return np.split(grad_out, splits, axis=0)


def softmax_neg_forward(scores: np.ndarray):
    """Softmax of -scores along axis 0 (low score -> high probability).

    Computed in float64: float32 exp underflows to an exact zero once score
    gaps pass ~104, which kills the gradient and freezes training when the
    distribution sharpens.
    """
    z = -scores.astype(np.float64)
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=0, keepdims=True)
    _check_finite("softmax", p)
    return p, p


def softmax_neg_backward(grad_p: np.ndarray, cache):
    p = cache
    g = grad_p.astype(np.float64)
    inner = (g * p).sum(axis=0, keepdims=True)
    # d/dscores = -dsoftmax: scores enter negated.
    return -(p * (g - inner))
