"""Zero-padded same-size 2-D convolutions (correlation convention) with
explicit im2col forward and the matching reverse-mode backward.

Kernel tensors have shape (k, k, c_in, c_out); feature maps are
(channels, side, side).  No bias terms anywhere.
"""

from __future__ import annotations

import numpy as np

__all__ = ["conv2d_forward", "conv2d_backward", "glorot_uniform"]


def _im2col(x, k):
    cin, h, w = x.shape
    pad = k // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((h * w, cin, k, k))
    for di in range(k):
        for dj in range(k):
            cols[:, :, di, dj] = xp[:, di:di + h, dj:dj + w].reshape(cin, h * w).T
    return cols


def conv2d_forward(x, kern):
    """Correlate x (c_in, h, w) with kern (k, k, c_in, c_out).

    Returns (out, cols) where out is (c_out, h, w) and cols is the im2col
    matrix reused by the backward pass.
    """
    cin, h, w = x.shape
    k = kern.shape[0]
    cols = _im2col(x, k)
    wmat = kern.transpose(2, 0, 1, 3).reshape(cin * k * k, -1)
    out = cols.reshape(h * w, -1) @ wmat
    return out.T.reshape(-1, h, w), cols


def conv2d_backward(dout, cols, kern, x_shape):
    """Gradients of conv2d_forward w.r.t. its input and kernel.

    dout is (c_out, h, w); returns (dx, dkern) with the original shapes.
    """
    cin, h, w = x_shape
    k = kern.shape[0]
    pad = k // 2
    dmat = dout.reshape(-1, h * w).T                        # (hw, cout)
    dkern = (cols.reshape(h * w, -1).T @ dmat)              # (cin*k*k, cout)
    dkern = dkern.reshape(cin, k, k, -1).transpose(1, 2, 0, 3)
    wmat = kern.transpose(2, 0, 1, 3).reshape(cin * k * k, -1)
    dcols = (dmat @ wmat.T).reshape(h * w, cin, k, k)
    dxp = np.zeros((cin, h + 2 * pad, w + 2 * pad))
    for di in range(k):
        for dj in range(k):
            dxp[:, di:di + h, dj:dj + w] += dcols[:, :, di, dj].T.reshape(cin, h, w)
    return dxp[:, pad:pad + h, pad:pad + w], dkern


def glorot_uniform(rng, k, cin, cout):
    """Kernel initialization: U(-lim, lim), lim = sqrt(6/(fan_in + fan_out))."""
    fan_in = cin * k * k
    fan_out = cout * k * k
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(k, k, cin, cout))
