import logging
from enum import Enum
from typing import Type

import numpy as np

from jgrp2o.exceptions import ShapeError

log = logging.getLogger(__name__)

Tensor4 = np.ndarray
"""Dense (batch, height, width, channels) array. Alias kept for signatures."""


class Precision(str, Enum):
    STANDARD = 'standard'
    WIDE = 'wide'

    @property
    def dtype(self) -> Type[np.floating]:
        """numpy scalar type used by this precision mode

        Returns:
            np.float32 for standard precision, np.float64 for wide precision
        """
        return np.float64 if self is Precision.WIDE else np.float32

    @property
    def tolerance(self) -> float:
        """Comparison tolerance used by oracle checks in this mode"""
        return 1e-9 if self is Precision.WIDE else 1e-4


class Padding(str, Enum):
    SAME = 'same'
    VALID = 'valid'


class PoolType(str, Enum):
    MAX = 'max'
    AVG = 'avg'


class ResidualLayout(str, Enum):
    BOTTLENECK = 'bottleneck'
    BASIC = 'basic'


class Mode(str, Enum):
    TRAIN = 'train'
    EVAL = 'eval'


class GraphPolicy(str, Enum):
    SKELETON = 'skeleton'
    SIMILARITY = 'similarity'
    PARAMETERIZED = 'parameterized'


class Weighting(str, Enum):
    VOTING = 'voting'
    UNIFORM = 'uniform'


class DatasetFormat(str, Enum):
    SYNTH = 'synth'
    NATIVE = 'native'
    ICVL = 'icvl'


def check_rank4(name: str, x: np.ndarray) -> None:
    """Validate that `x` is a rank-4 tensor

    Args:
        name: operation name used in the error
        x: array to check

    Returns:

    """
    if x.ndim != 4:
        log.error('%s expects a rank-4 tensor, got shape %s', name, x.shape)
        raise ShapeError(name, f'expected (B, H, W, C) tensor, got shape {x.shape}')
