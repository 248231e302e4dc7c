import logging
import math
from typing import Any, Tuple

import numpy as np
from pydantic import BaseModel, root_validator, validator

from jgrp2o.common_types import check_rank4, Mode, PoolType, ResidualLayout
from jgrp2o.exceptions import ShapeError
from jgrp2o.model.layers import BatchNorm, Conv2d, ConvBnRelu, Layer, Pool2, Residual
from jgrp2o.numerics import ops
from jgrp2o.numerics.params import ParamStore

log = logging.getLogger(__name__)


class BackboneConfig(BaseModel):
    input_size: int = 96
    feature_size: int = 24
    channels: int = 128
    depth: int = 2
    stages: int = 2
    pool: PoolType = PoolType.MAX
    residual_block: ResidualLayout = ResidualLayout.BOTTLENECK

    class Config:
        extra = 'forbid'
        validate_assignment = True

    @validator('input_size', 'feature_size', 'channels')
    def positive(cls, v: int) -> int:
        if v <= 0:
            raise ValueError('must be positive')
        return v

    @validator('depth')
    def non_negative(cls, v: int) -> int:
        if v < 0:
            raise ValueError('must be >= 0')
        return v

    @validator('stages')
    def at_least_one_stage(cls, v: int) -> int:
        if v < 1:
            raise ValueError('at least one stage is required')
        return v

    @root_validator(skip_on_failure=True)
    def check_resolution(cls, values: dict) -> dict:
        input_size, feature_size, depth = values['input_size'], values['feature_size'], values['depth']
        ratio = input_size // feature_size
        if input_size % feature_size or ratio & (ratio - 1):
            raise ValueError(f'input_size / feature_size must be a power of two, got {input_size}/{feature_size}')
        if feature_size % (2 ** depth):
            raise ValueError(f'feature_size {feature_size} is not divisible by 2^{depth}')
        if values['residual_block'] is ResidualLayout.BOTTLENECK and values['channels'] % 2:
            raise ValueError('bottleneck blocks need an even channel count')
        return values

    @property
    def downsamplings(self) -> int:
        return int(math.log2(self.input_size // self.feature_size))


class Stem(Layer):
    """5x5 conv + BN + ReLU, then residual blocks interleaved with 2x pooling down to feature_size."""

    def __init__(self, params: ParamStore, name: str, config: BackboneConfig):
        super().__init__(params, name)
        self.config = config
        channels = config.channels
        self.conv = Conv2d(params, f'{name}/conv', 1, channels, kernel_size=5)
        self.bn = BatchNorm(params, f'{name}/bn', channels)
        self.blocks = []
        for level in range(config.downsamplings):
            self.blocks.append(Residual(params, f'{name}/res{level + 1}', channels, config.residual_block))
            self.blocks.append(Pool2(params, f'{name}/pool{level + 1}', config.pool))
        self.blocks.append(Residual(params, f'{name}/res{config.downsamplings + 1}', channels, config.residual_block))

    def forward(self, x: np.ndarray, mode: Mode = Mode.EVAL) -> Tuple[np.ndarray, Any]:
        check_rank4(self.name, x)
        size = self.config.input_size
        if x.shape[1:] != (size, size, 1):
            log.error('Stem expects (B, %s, %s, 1) input, got %s', size, size, x.shape)
            raise ShapeError(self.name, f'expected (B, {size}, {size}, 1) depth images, got {x.shape}')

        h, conv_cache = self.conv.forward(x, mode)
        a, bn_cache = self.bn.forward(h, mode)
        h = ops.relu(a)
        caches = []
        for block in self.blocks:
            h, cache = block.forward(h, mode)
            caches.append(cache)
        return h, (conv_cache, bn_cache, a, caches)

    def backward(self, dy: np.ndarray, cache: Any) -> np.ndarray:
        conv_cache, bn_cache, a, caches = cache
        for block, block_cache in zip(reversed(self.blocks), reversed(caches)):
            dy = block.backward(dy, block_cache)
        return self.conv.backward(self.bn.backward(ops.relu_backward(dy, a), bn_cache), conv_cache)


class Hourglass(Layer):
    """Symmetric encoder/decoder with a residual skip branch at every level.

    depth 0 degenerates to a single residual block.
    """

    def __init__(self, params: ParamStore, name: str, channels: int, depth: int, config: BackboneConfig):
        super().__init__(params, name)
        self.depth = depth
        layout = config.residual_block
        if depth == 0:
            self.inner: Layer = Residual(params, f'{name}/res', channels, layout)
            return

        self.up1 = Residual(params, f'{name}/up1', channels, layout)
        self.pool = Pool2(params, f'{name}/pool', config.pool)
        self.low1 = Residual(params, f'{name}/low1', channels, layout)
        if depth > 1:
            self.inner = Hourglass(params, f'{name}/inner', channels, depth - 1, config)
        else:
            self.inner = Residual(params, f'{name}/low2', channels, layout)
        self.low3 = Residual(params, f'{name}/low3', channels, layout)

    def forward(self, x: np.ndarray, mode: Mode = Mode.EVAL) -> Tuple[np.ndarray, Any]:
        check_rank4(self.name, x)
        step = 2 ** self.depth
        if x.shape[1] % step or x.shape[2] % step:
            log.error('Hourglass of depth %s got spatial dims %s', self.depth, x.shape[1:3])
            raise ShapeError(self.name, f'spatial dims {x.shape[1:3]} not divisible by 2^{self.depth}')
        if self.depth == 0:
            return self.inner.forward(x, mode)

        up1, c_up1 = self.up1.forward(x, mode)
        low, c_pool = self.pool.forward(x, mode)
        low1, c_low1 = self.low1.forward(low, mode)
        low2, c_inner = self.inner.forward(low1, mode)
        low3, c_low3 = self.low3.forward(low2, mode)
        return up1 + ops.upsample2(low3), (c_up1, c_pool, c_low1, c_inner, c_low3)

    def backward(self, dy: np.ndarray, cache: Any) -> np.ndarray:
        if self.depth == 0:
            return self.inner.backward(dy, cache)

        c_up1, c_pool, c_low1, c_inner, c_low3 = cache
        dlow = self.low3.backward(ops.upsample2_backward(dy), c_low3)
        dlow = self.inner.backward(dlow, c_inner)
        dlow = self.low1.backward(dlow, c_low1)
        return self.up1.backward(dy, c_up1) + self.pool.backward(dlow, c_pool)


class StageBackbone(Layer):
    """Hourglass followed by a residual block and a 1x1 conv-BN-ReLU producing the feature map X."""

    def __init__(self, params: ParamStore, name: str, config: BackboneConfig):
        super().__init__(params, name)
        channels = config.channels
        self.hourglass = Hourglass(params, f'{name}/hourglass', channels, config.depth, config)
        self.out = Residual(params, f'{name}/out', channels, config.residual_block)
        self.lin = ConvBnRelu(params, f'{name}/lin', channels, channels)

    def forward(self, x: np.ndarray, mode: Mode = Mode.EVAL) -> Tuple[np.ndarray, Any]:
        h, c_hg = self.hourglass.forward(x, mode)
        h, c_out = self.out.forward(h, mode)
        h, c_lin = self.lin.forward(h, mode)
        return h, (c_hg, c_out, c_lin)

    def backward(self, dy: np.ndarray, cache: Any) -> np.ndarray:
        c_hg, c_out, c_lin = cache
        dy = self.lin.backward(dy, c_lin)
        dy = self.out.backward(dy, c_out)
        return self.hourglass.backward(dy, c_hg)


class StageInput(Layer):
    """Input of stage s >= 2: stem features plus a 1x1 remap of the previous stage's augmented map."""

    def __init__(self, params: ParamStore, name: str, channels: int):
        super().__init__(params, name)
        self.remap = Conv2d(params, f'{name}/remap', channels, channels)

    def forward_pair(self, stem: np.ndarray, prev_augmented: np.ndarray) -> Tuple[np.ndarray, Any]:
        if prev_augmented.shape != stem.shape:
            log.error('Stage input shapes differ: stem %s, previous %s', stem.shape, prev_augmented.shape)
            raise ShapeError(self.name, f'stem {stem.shape} vs previous stage {prev_augmented.shape}')
        remapped, cache = self.remap.forward(prev_augmented)
        return stem + remapped, cache

    def backward(self, dy: np.ndarray, cache: Any) -> np.ndarray:
        """Gradient w.r.t. the previous augmented map; the stem receives ``dy`` unchanged."""
        return self.remap.backward(dy, cache)
