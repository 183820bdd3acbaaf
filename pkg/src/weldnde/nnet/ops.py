"""Array-level network primitives with hand-written backward passes.

Internal activations use the layout ``(C, N, H, W)`` so that every 3x3
convolution reduces to nine strided GEMMs over a flattened, zero-padded
buffer (no im2col copies).  The public single-sample helpers
(:func:`conv2d`, :func:`maxpool2`, :func:`upsample_nearest2`) accept
``(C, H, W)`` arrays.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when tensor extents do not conform."""


# --------------------------------------------------------------------------
# 3x3 same-padding convolution


def _offsets(width: int) -> list[int]:
    wp = width + 2
    return [dy * wp + dx for dy in range(3) for dx in range(3)]


def conv3x3_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Cross-correlation with zero padding 1 on ``(C, N, H, W)`` input.

    Returns the ``(F, N, H, W)`` output and a cache for the backward pass.
    """
    c, n, h, w = x.shape
    f = weight.shape[0]
    if weight.shape != (f, c, 3, 3):
        raise ShapeError(f"weight shape {weight.shape} does not match {c} input channels")
    if bias.shape != (f,):
        raise ShapeError(f"bias shape {bias.shape} != ({f},)")
    xp = np.zeros((c, n, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    flat = xp.reshape(c, -1)
    m = flat.shape[1]
    span = m - (2 * (w + 2) + 2)
    buf = np.empty((f, m), dtype=x.dtype)
    acc = buf[:, :span]
    taps = np.ascontiguousarray(weight.transpose(2, 3, 0, 1).reshape(9, f, c))
    for k, off in enumerate(_offsets(w)):
        wk = taps[k]
        if k == 0:
            np.matmul(wk, flat[:, off:off + span], out=acc)
        else:
            acc += wk @ flat[:, off:off + span]
    out = buf.reshape(f, n, h + 2, w + 2)[:, :, :h, :w] + bias[:, None, None, None]
    return out, (flat, weight, (c, n, h, w))


def conv3x3_backward(dout: np.ndarray, cache):
    flat, weight, (c, n, h, w) = cache
    f = weight.shape[0]
    m = flat.shape[1]
    span = m - (2 * (w + 2) + 2)
    dbuf = np.zeros((f, n, h + 2, w + 2), dtype=dout.dtype)
    dbuf[:, :, :h, :w] = dout
    dflat = dbuf.reshape(f, -1)[:, :span]
    dtaps = np.empty((9, f, c), dtype=weight.dtype)
    taps_t = np.ascontiguousarray(weight.transpose(2, 3, 1, 0).reshape(9, c, f))
    dxflat = np.zeros_like(flat)
    for k, off in enumerate(_offsets(w)):
        seg = flat[:, off:off + span]
        dtaps[k] = dflat @ seg.T
        dxflat[:, off:off + span] += taps_t[k] @ dflat
    dweight = np.ascontiguousarray(dtaps.reshape(3, 3, f, c).transpose(2, 3, 0, 1))
    dbias = dout.sum(axis=(1, 2, 3))
    dx = dxflat.reshape(c, n, h + 2, w + 2)[:, :, 1:-1, 1:-1]
    return np.ascontiguousarray(dx), dweight, dbias


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padded 3x3 cross-correlation of a ``(C, H, W)`` array."""
    if x.ndim != 3:
        raise ShapeError(f"expected (C, H, W) input, got shape {x.shape}")
    out, _ = conv3x3_forward(x[:, None], weight, bias)
    return out[:, 0]


# --------------------------------------------------------------------------
# 1x1 convolution (output head)


def conv1x1_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    c, n, h, w = x.shape
    if weight.shape[1] != c:
        raise ShapeError(f"weight shape {weight.shape} does not match {c} input channels")
    flat = x.reshape(c, -1)
    out = (weight @ flat).reshape(weight.shape[0], n, h, w) + bias[:, None, None, None]
    return out, (flat, weight, x.shape)


def conv1x1_backward(dout: np.ndarray, cache):
    flat, weight, shape = cache
    dflat = dout.reshape(dout.shape[0], -1)
    dweight = dflat @ flat.T
    dx = (weight.T @ dflat).reshape(shape)
    return dx, dweight, dout.sum(axis=(1, 2, 3))


# --------------------------------------------------------------------------
# pooling / upsampling / pointwise


def maxpool2_forward(x: np.ndarray):
    """2x2 max pooling over the trailing two axes; returns (out, argmax)."""
    *lead, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"max pooling needs even extents, got {h}x{w}")
    blocks = x.reshape(*lead, h // 2, 2, w // 2, 2)
    blocks = np.moveaxis(blocks, -3, -2).reshape(*lead, h // 2, w // 2, 4)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2_backward(dout: np.ndarray, idx: np.ndarray) -> np.ndarray:
    *lead, h2, w2 = dout.shape
    blocks = np.zeros((*lead, h2, w2, 4), dtype=dout.dtype)
    np.put_along_axis(blocks, idx[..., None], dout[..., None], axis=-1)
    blocks = blocks.reshape(*lead, h2, w2, 2, 2)
    return np.moveaxis(blocks, -2, -3).reshape(*lead, 2 * h2, 2 * w2)


def maxpool2(x: np.ndarray):
    """Public 2x2 max pooling of a ``(C, H, W)`` tensor: (pooled, argmax indices)."""
    return maxpool2_forward(x)


def upsample_nearest2(x: np.ndarray) -> np.ndarray:
    """Replicate every value into a 2x2 block over the trailing two axes."""
    return np.repeat(np.repeat(x, 2, axis=-2), 2, axis=-1)


def upsample_nearest2_backward(dout: np.ndarray) -> np.ndarray:
    *lead, h, w = dout.shape
    return dout.reshape(*lead, h // 2, 2, w // 2, 2).sum(axis=(-3, -1))


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)


def relu_forward(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dout * mask
