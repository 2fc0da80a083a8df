"""Functional conv/pool/linear layers with hand-written backward passes.

All arrays are channels-first (B, C, H, W).  Forward functions return
(output, cache); backward functions take the upstream gradient plus the
cache and return gradients in the same shapes as their inputs.  Convolution
is evaluated as an im2col matrix product; the column matrix is recomputed
during backward instead of cached, trading a little compute for memory.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col(x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
    """(B, C, H, W) -> (B, OH*OW, C*k*k) patch matrix."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(x, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    b, c, oh, ow, _, _ = windows.shape
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b, oh * ow, c * kernel * kernel)
    return np.ascontiguousarray(cols)


def conv_forward(x, w, b, stride: int, padding: int):
    n, _, _, _ = x.shape
    f, c, kernel, _ = w.shape
    cols = _im2col(x, kernel, stride, padding)
    oh = (x.shape[2] + 2 * padding - kernel) // stride + 1
    ow = (x.shape[3] + 2 * padding - kernel) // stride + 1
    out = cols @ w.reshape(f, -1).T + b
    out = out.transpose(0, 2, 1).reshape(n, f, oh, ow)
    cache = (x, w, stride, padding)
    return out, cache


def conv_backward(dout, cache):
    x, w, stride, padding = cache
    n, f, oh, ow = dout.shape
    _, c, kernel, _ = w.shape
    cols = _im2col(x, kernel, stride, padding)
    dflat = dout.reshape(n, f, oh * ow).transpose(0, 2, 1)  # (B, OH*OW, F)

    db = dout.sum(axis=(0, 2, 3))
    dw = np.tensordot(dflat, cols, axes=([0, 1], [0, 1])).reshape(w.shape)

    dcols = dflat @ w.reshape(f, -1)  # (B, OH*OW, C*k*k)
    dcols = dcols.reshape(n, oh, ow, c, kernel, kernel).transpose(0, 3, 1, 2, 4, 5)
    hp = x.shape[2] + 2 * padding
    wp = x.shape[3] + 2 * padding
    dxp = np.zeros((n, c, hp, wp), dtype=dout.dtype)
    for i in range(kernel):
        for j in range(kernel):
            dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += dcols[:, :, :, :, i, j]
    if padding:
        dxp = dxp[:, :, padding:-padding, padding:-padding]
    return dxp, dw, db


def maxpool_forward(x, kernel: int, stride: int):
    n, c, h, w = x.shape
    windows = sliding_window_view(x, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    _, _, oh, ow, _, _ = windows.shape
    flat = np.ascontiguousarray(windows).reshape(n, c, oh, ow, kernel * kernel)
    argmax = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]
    cache = (x.shape, x.dtype, argmax, kernel, stride)
    return out, cache


def maxpool_backward(dout, cache):
    (n, c, h, w), dtype, argmax, kernel, stride = cache
    _, _, oh, ow = dout.shape
    row = (np.arange(oh) * stride)[None, None, :, None] + argmax // kernel
    col = (np.arange(ow) * stride)[None, None, None, :] + argmax % kernel
    flat_pos = (row * w + col).reshape(n * c, oh * ow)
    dx = np.zeros((n * c, h * w), dtype=dtype)
    np.add.at(dx, (np.arange(n * c)[:, None], flat_pos), dout.reshape(n * c, oh * ow))
    return dx.reshape(n, c, h, w)


def relu_forward(x):
    out = np.maximum(x, 0)
    return out, out


def relu_backward(dout, cache):
    return dout * (cache > 0)


def dropout_forward(x, p: float, rng: np.random.Generator):
    """Inverted dropout: scale kept units by 1/(1-p) so inference is identity."""
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout * mask


def linear_forward(x, w, b):
    return x @ w.T + b, x


def linear_backward(dout, cache, w):
    x = cache
    dw = dout.T @ x
    db = dout.sum(axis=0)
    dx = dout @ w
    return dx, dw, db


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shift-stabilized."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
