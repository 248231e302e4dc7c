"""Differentiable primitives on (batch, height, width, channels) arrays.

Every forward function returns ``(output, cache)``; the matching ``*_backward`` function takes the
upstream gradient and the cache and returns gradients for each differentiable input. Forward
functions never mutate their arguments.
"""
import logging
import math
from typing import NamedTuple, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from jgrp2o.common_types import check_rank4, Mode, Padding
from jgrp2o.exceptions import ShapeError

log = logging.getLogger(__name__)

BN_MOMENTUM = 0.9
BN_EPSILON = 1e-5


def conv_output_size(size: int, k: int, stride: int, padding: Padding) -> Tuple[int, int, int]:
    """Output length and (before, after) zero padding along one spatial axis

    Args:
        size: input length
        k: kernel length
        stride: stride
        padding: 'same' gives ceil(size / stride), 'valid' gives floor((size - k) / stride) + 1

    Returns:
        (output length, padding before, padding after)
    """
    if Padding(padding) is Padding.VALID:
        return (size - k) // stride + 1 if size >= k else 0, 0, 0

    out = math.ceil(size / stride)
    total = max((out - 1) * stride + k - size, 0)
    return out, total // 2, total - total // 2


class ConvCache(NamedTuple):
    x_shape: Tuple[int, ...]
    windows: Optional[np.ndarray]
    x: Optional[np.ndarray]
    kernel: np.ndarray
    stride: int
    pads: Tuple[int, int, int, int]
    out_hw: Tuple[int, int]
    has_bias: bool


def conv2d(
    x: np.ndarray,
    kernel: np.ndarray,
    bias: Optional[np.ndarray] = None,
    stride: int = 1,
    padding: Padding = Padding.SAME,
) -> Tuple[np.ndarray, ConvCache]:
    """Cross-correlation of an NHWC tensor with a (kh, kw, Cin, Cout) kernel

    Args:
        x: input tensor
        kernel: weights
        bias: optional length-Cout bias
        stride: spatial stride, >= 1
        padding: zero-padding rule

    Returns:
        (output, cache)
    """
    check_rank4('conv2d', x)
    if kernel.ndim != 4:
        raise ShapeError('conv2d', f'kernel must be (kh, kw, Cin, Cout), got {kernel.shape}')
    kh, kw, cin, cout = kernel.shape
    batch, height, width, channels = x.shape
    if channels != cin:
        log.error('conv2d channel mismatch: input %s, kernel %s', x.shape, kernel.shape)
        raise ShapeError('conv2d', f'input has {channels} channels, kernel expects {cin}')
    if stride < 1:
        raise ShapeError('conv2d', f'stride must be >= 1, got {stride}')
    if bias is not None and bias.shape != (cout,):
        raise ShapeError('conv2d', f'bias shape {bias.shape} != ({cout},)')

    oh, pt, pb = conv_output_size(height, kh, stride, padding)
    ow, pl, pr = conv_output_size(width, kw, stride, padding)
    if oh <= 0 or ow <= 0:
        raise ShapeError('conv2d', f'zero-sized output for input {x.shape} and kernel {kernel.shape}')

    if kh == kw == 1 and stride == 1:
        y = x @ kernel[0, 0]
        cache = ConvCache(x.shape, None, x, kernel, stride, (0, 0, 0, 0), (oh, ow), bias is not None)
    else:
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :oh, :ow]
        y = np.tensordot(windows, kernel, axes=([3, 4, 5], [2, 0, 1]))
        cache = ConvCache(x.shape, windows, None, kernel, stride, (pt, pb, pl, pr), (oh, ow), bias is not None)

    if bias is not None:
        y = y + bias
    return y.astype(x.dtype, copy=False), cache


def conv2d_backward(dy: np.ndarray, cache: ConvCache) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """Gradients of conv2d

    Args:
        dy: gradient w.r.t. the output
        cache: cache returned by conv2d

    Returns:
        (d input, d kernel, d bias or None)
    """
    kernel = cache.kernel
    kh, kw, cin, cout = kernel.shape
    dbias = dy.sum(axis=(0, 1, 2)) if cache.has_bias else None

    if cache.windows is None:
        assert cache.x is not None
        dx = dy @ kernel[0, 0].T
        dkernel = (cache.x.reshape(-1, cin).T @ dy.reshape(-1, cout)).reshape(kernel.shape)
        return dx, dkernel, dbias

    dkernel = np.tensordot(cache.windows, dy, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)

    batch, height, width, _ = cache.x_shape
    pt, pb, pl, pr = cache.pads
    oh, ow = cache.out_hw
    stride = cache.stride
    dxp = np.zeros((batch, height + pt + pb, width + pl + pr, cin), dtype=dy.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + stride * (oh - 1) + 1:stride, j:j + stride * (ow - 1) + 1:stride, :] += dy @ kernel[i, j].T
    dx = dxp[:, pt:pt + height, pl:pl + width, :]
    return dx, dkernel, dbias


def spatial_softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax over all H*W positions, independently per batch item and channel"""
    check_rank4('spatial_softmax', logits)
    shifted = logits - logits.max(axis=(1, 2), keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=(1, 2), keepdims=True)


def spatial_softmax_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    return y * (dy - (dy * y).sum(axis=(1, 2), keepdims=True))


def row_softmax(scores: np.ndarray) -> np.ndarray:
    """Softmax over the last axis"""
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def row_softmax_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    return y * (dy - (dy * y).sum(axis=-1, keepdims=True))


def _reduce_to(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    return grad


def matmul(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
    """Dense (optionally batched) product a @ b

    Args:
        a: (..., m, k)
        b: (..., k, n)

    Returns:
        (product, cache)
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        log.error('matmul inner dimension mismatch: %s @ %s', a.shape, b.shape)
        raise ShapeError('matmul', f'cannot multiply {a.shape} by {b.shape}')
    return a @ b, (a, b)


def matmul_backward(dy: np.ndarray, cache: Tuple[np.ndarray, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    a, b = cache
    da = dy @ np.swapaxes(b, -1, -2)
    db = np.swapaxes(a, -1, -2) @ dy
    return _reduce_to(da, a.shape), _reduce_to(db, b.shape)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dy * (x > 0)


def _check_even(name: str, x: np.ndarray) -> None:
    check_rank4(name, x)
    if x.shape[1] % 2 or x.shape[2] % 2:
        log.error('%s requires even spatial dims, got %s', name, x.shape)
        raise ShapeError(name, f'spatial dims must be even, got {x.shape[1]}x{x.shape[2]}')


def _blocks(x: np.ndarray) -> np.ndarray:
    b, h, w, c = x.shape
    return x.reshape(b, h // 2, 2, w // 2, 2, c)


def avg_pool2(x: np.ndarray) -> np.ndarray:
    """2x2 non-overlapping mean pooling"""
    _check_even('avg_pool2', x)
    return _blocks(x).mean(axis=(2, 4))


def avg_pool2_backward(dy: np.ndarray) -> np.ndarray:
    return upsample2(dy) * 0.25


def max_pool2(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """2x2 non-overlapping max pooling

    Returns:
        (output, one-hot argmax mask of the input's shape); ties route to the first maximum
    """
    _check_even('max_pool2', x)
    b, h, w, c = x.shape
    windows = _blocks(x).transpose(0, 1, 3, 5, 2, 4).reshape(b, h // 2, w // 2, c, 4)
    arg = windows.argmax(axis=-1)
    mask = np.zeros(windows.shape, dtype=x.dtype)
    np.put_along_axis(mask, arg[..., None], 1.0, axis=-1)
    mask = mask.reshape(b, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(x.shape)
    return np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0], mask


def max_pool2_backward(dy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return upsample2(dy) * mask


def upsample2(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbour 2x upsampling of both spatial axes"""
    check_rank4('upsample2', x)
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def upsample2_backward(dy: np.ndarray) -> np.ndarray:
    return _blocks(dy).sum(axis=(2, 4))


class BatchNormCache(NamedTuple):
    xhat: np.ndarray
    inv_std: np.ndarray
    scale: np.ndarray
    mode: Mode
    running_mean: np.ndarray
    running_var: np.ndarray


def batch_norm(
    x: np.ndarray,
    scale: np.ndarray,
    shift: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    mode: Mode = Mode.EVAL,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPSILON,
) -> Tuple[np.ndarray, BatchNormCache]:
    """Per-channel batch normalisation

    In train mode the batch statistics normalise the input and the updated running statistics
    are returned in the cache (``running_mean``/``running_var``); the caller decides whether to
    store them. Eval mode uses the running statistics only.

    Args:
        x: input tensor
        scale: per-channel gamma
        shift: per-channel beta
        running_mean: per-channel running mean
        running_var: per-channel running variance
        mode: train or eval
        momentum: weight of the old running value in the moving average
        eps: added to the variance

    Returns:
        (output, cache)
    """
    check_rank4('batch_norm', x)
    channels = x.shape[3]
    stats = (('scale', scale), ('shift', shift), ('running_mean', running_mean), ('running_var', running_var))
    for name, array in stats:
        if array.shape != (channels,):
            log.error('batch_norm %s shape %s does not match %s channels', name, array.shape, channels)
            raise ShapeError('batch_norm', f'{name} has shape {array.shape}, input has {channels} channels')

    if Mode(mode) is Mode.TRAIN:
        count = x.shape[0] * x.shape[1] * x.shape[2]
        mean = x.mean(axis=(0, 1, 2))
        var = x.var(axis=(0, 1, 2))
        unbiased = var * count / (count - 1) if count > 1 else var
        new_mean = momentum * running_mean + (1.0 - momentum) * mean
        new_var = momentum * running_var + (1.0 - momentum) * unbiased
    else:
        mean, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    y = xhat * scale + shift
    cache = BatchNormCache(xhat, inv_std, scale, Mode(mode), new_mean.astype(x.dtype), new_var.astype(x.dtype))
    return y.astype(x.dtype, copy=False), cache


def batch_norm_backward(dy: np.ndarray, cache: BatchNormCache) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of batch_norm

    Returns:
        (d input, d scale, d shift)
    """
    axes = (0, 1, 2)
    dscale = (dy * cache.xhat).sum(axis=axes)
    dshift = dy.sum(axis=axes)
    dxhat = dy * cache.scale
    if cache.mode is Mode.EVAL:
        return dxhat * cache.inv_std, dscale, dshift

    count = dy.shape[0] * dy.shape[1] * dy.shape[2]
    dx = (cache.inv_std / count) * (
        count * dxhat - dxhat.sum(axis=axes) - cache.xhat * (dxhat * cache.xhat).sum(axis=axes)
    )
    return dx, dscale, dshift
