import logging
from typing import Any, List, Tuple

import numpy as np

from jgrp2o.common_types import Mode, Padding, PoolType, ResidualLayout
from jgrp2o.exceptions import ShapeError
from jgrp2o.numerics import ops
from jgrp2o.numerics.params import ParamStore

log = logging.getLogger(__name__)


class Layer:
    """A named group of ParamStore entries with a forward pass returning ``(output, cache)``
    and a backward pass that accumulates parameter gradients and returns the input gradient."""

    def __init__(self, params: ParamStore, name: str):
        self.params = params
        self.name = name

    def __str__(self) -> str:
        return f'<{self.__class__.__name__} name={self.name}>'

    def forward(self, x: np.ndarray, mode: Mode = Mode.EVAL) -> Tuple[np.ndarray, Any]:
        raise NotImplementedError

    def backward(self, dy: np.ndarray, cache: Any) -> np.ndarray:
        raise NotImplementedError


class Conv2d(Layer):
    def __init__(
        self,
        params: ParamStore,
        name: str,
        in_channels: int,
        out_channels: int,
        kernel_size: int = 1,
        stride: int = 1,
        padding: Padding = Padding.SAME,
        bias: bool = True,
    ):
        super().__init__(params, name)
        self.stride = stride
        self.padding = padding
        self.kernel = params.add(
            f'{name}/kernel',
            (kernel_size, kernel_size, in_channels, out_channels),
            'he_normal',
            fan_in=kernel_size * kernel_size * in_channels,
        )
        self.bias = params.add(f'{name}/bias', (out_channels,), 'zeros', decay=False) if bias else None

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[2]

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[3]

    def forward(self, x: np.ndarray, mode: Mode = Mode.EVAL) -> Tuple[np.ndarray, ops.ConvCache]:
        bias = self.bias.value if self.bias is not None else None
        return ops.conv2d(x, self.kernel.value, bias, self.stride, self.padding)

    def backward(self, dy: np.ndarray, cache: ops.ConvCache) -> np.ndarray:
        dx, dkernel, dbias = ops.conv2d_backward(dy, cache)
        self.kernel.grad += dkernel
        if self.bias is not None and dbias is not None:
            self.bias.grad += dbias
        return dx


class BatchNorm(Layer):
    def __init__(self, params: ParamStore, name: str, channels: int):
        super().__init__(params, name)
        self.scale = params.add(f'{name}/scale', (channels,), 'ones', decay=False)
        self.shift = params.add(f'{name}/shift', (channels,), 'zeros', decay=False)
        self.running_mean = params.add(f'{name}/running_mean', (channels,), 'zeros', trainable=False)
        self.running_var = params.add(f'{name}/running_var', (channels,), 'ones', trainable=False)

    def forward(self, x: np.ndarray, mode: Mode = Mode.EVAL) -> Tuple[np.ndarray, ops.BatchNormCache]:
        y, cache = ops.batch_norm(
            x,
            self.scale.value,
            self.shift.value,
            self.running_mean.value,
            self.running_var.value,
            mode,
        )
        if cache.mode is Mode.TRAIN:
            self.running_mean.value[...] = cache.running_mean
            self.running_var.value[...] = cache.running_var
        return y, cache

    def backward(self, dy: np.ndarray, cache: ops.BatchNormCache) -> np.ndarray:
        dx, dscale, dshift = ops.batch_norm_backward(dy, cache)
        self.scale.grad += dscale
        self.shift.grad += dshift
        return dx


class ConvBnRelu(Layer):
    """Convolution followed by batch normalisation and ReLU."""

    def __init__(self, params: ParamStore, name: str, in_channels: int, out_channels: int, kernel_size: int = 1):
        super().__init__(params, name)
        self.conv = Conv2d(params, f'{name}/conv', in_channels, out_channels, kernel_size)
        self.bn = BatchNorm(params, f'{name}/bn', out_channels)

    def forward(self, x: np.ndarray, mode: Mode = Mode.EVAL) -> Tuple[np.ndarray, Any]:
        h, conv_cache = self.conv.forward(x, mode)
        a, bn_cache = self.bn.forward(h, mode)
        return ops.relu(a), (conv_cache, bn_cache, a)

    def backward(self, dy: np.ndarray, cache: Any) -> np.ndarray:
        conv_cache, bn_cache, a = cache
        da = ops.relu_backward(dy, a)
        return self.conv.backward(self.bn.backward(da, bn_cache), conv_cache)


class Residual(Layer):
    """Pre-activation residual block with an identity skip, C -> C channels.

    bottleneck: BN-ReLU-1x1 (C -> C/2), BN-ReLU-3x3 (C/2 -> C/2), BN-ReLU-1x1 (C/2 -> C)
    basic: BN-ReLU-3x3 (C -> C), BN-ReLU-3x3 (C -> C)
    """

    def __init__(self, params: ParamStore, name: str, channels: int, layout: ResidualLayout):
        super().__init__(params, name)
        self.channels = channels
        if ResidualLayout(layout) is ResidualLayout.BOTTLENECK:
            mid = channels // 2
            plan = [(channels, mid, 1), (mid, mid, 3), (mid, channels, 1)]
        else:
            plan = [(channels, channels, 3), (channels, channels, 3)]

        self.units: List[Tuple[BatchNorm, Conv2d]] = [
            (
                BatchNorm(params, f'{name}/bn{index}', cin),
                Conv2d(params, f'{name}/conv{index}', cin, cout, k),
            )
            for index, (cin, cout, k) in enumerate(plan, start=1)
        ]

    def forward(self, x: np.ndarray, mode: Mode = Mode.EVAL) -> Tuple[np.ndarray, Any]:
        if x.shape[3] != self.channels:
            raise ShapeError(self.name, f'expected {self.channels} channels, got {x.shape[3]}')
        h = x
        caches = []
        for bn, conv in self.units:
            a, bn_cache = bn.forward(h, mode)
            h, conv_cache = conv.forward(ops.relu(a), mode)
            caches.append((bn_cache, a, conv_cache))
        return x + h, caches

    def backward(self, dy: np.ndarray, cache: Any) -> np.ndarray:
        dh = dy
        for (bn, conv), (bn_cache, a, conv_cache) in zip(reversed(self.units), reversed(cache)):
            dr = conv.backward(dh, conv_cache)
            dh = bn.backward(ops.relu_backward(dr, a), bn_cache)
        return dy + dh


class Pool2(Layer):
    def __init__(self, params: ParamStore, name: str, pool: PoolType):
        super().__init__(params, name)
        self.pool = PoolType(pool)

    def forward(self, x: np.ndarray, mode: Mode = Mode.EVAL) -> Tuple[np.ndarray, Any]:
        if self.pool is PoolType.MAX:
            return ops.max_pool2(x)
        return ops.avg_pool2(x), None

    def backward(self, dy: np.ndarray, cache: Any) -> np.ndarray:
        if self.pool is PoolType.MAX:
            return ops.max_pool2_backward(dy, cache)
        return ops.avg_pool2_backward(dy)
