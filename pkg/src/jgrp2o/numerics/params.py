import logging
from collections import OrderedDict
from typing import Dict, Iterator, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from jgrp2o.common_types import Precision
from jgrp2o.exceptions import InputValidationError, ShapeError

log = logging.getLogger(__name__)

Shape = Tuple[int, ...]


class Parameter(BaseModel):
    """One named entry of a ParamStore.

    Buffers (batch-norm running statistics) are stored as non-trainable entries so that
    checkpoints carry them, but they never receive gradients or optimizer updates.
    """

    name: str = Field(allow_mutation=False)
    value: np.ndarray
    grad: np.ndarray
    trainable: bool = Field(default=True, allow_mutation=False)
    decay: bool = Field(default=True, allow_mutation=False)

    class Config:
        arbitrary_types_allowed = True
        validate_assignment = True

    def __str__(self) -> str:
        return f'<Parameter name={self.name} shape={self.shape} trainable={self.trainable}>'

    @property
    def shape(self) -> Shape:
        return tuple(self.value.shape)

    @property
    def size(self) -> int:
        return int(self.value.size)


class ParamStore:
    """Ordered map from parameter path (``stage1/jgr/phi/kernel``) to value and gradient arrays.

    All arrays share the dtype of the store precision. Mutation (gradient accumulation,
    optimizer steps) is single-writer.
    """

    def __init__(self, precision: Precision = Precision.STANDARD, seed: int = 0):
        """
        Args:
            precision: arithmetic precision for every array in the store
            seed: seed of the initialisation generator
        """
        self.precision = Precision(precision)
        self.dtype = self.precision.dtype
        self.rng = np.random.default_rng(seed)
        self._entries: Dict[str, Parameter] = OrderedDict()

    def __str__(self) -> str:
        return f'<ParamStore entries={len(self)} scalars={self.count()} precision={self.precision.value}>'

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, name: object) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._entries.values())

    def __getitem__(self, name: str) -> Parameter:
        return self._entries[name]

    def names(self) -> Tuple[str, ...]:
        return tuple(self._entries)

    def add(
        self,
        name: str,
        shape: Shape,
        init: Union[str, float, np.ndarray] = 'zeros',
        *,
        fan_in: Optional[int] = None,
        trainable: bool = True,
        decay: bool = True,
    ) -> Parameter:
        """Register a new entry

        Args:
            name: unique slash-separated path
            shape: value shape
            init: 'zeros', 'ones', 'he_normal', a constant or an explicit array
            fan_in: fan-in used by 'he_normal'; defaults to the product of all but the last axis
            trainable: whether the entry receives gradients and optimizer updates
            decay: whether decoupled weight decay applies to the entry

        Returns:
            Parameter
        """
        if name in self._entries:
            log.error('Parameter %s is already registered', name)
            raise InputValidationError('parameter name', detail=f'duplicate entry "{name}"')

        shape = tuple(int(s) for s in shape)
        value = self._initial_value(shape, init, fan_in)
        parameter = Parameter(
            name=name,
            value=value,
            grad=np.zeros(shape, dtype=self.dtype),
            trainable=trainable,
            decay=decay and trainable,
        )
        self._entries[name] = parameter
        log.debug('Registered %s', parameter)
        return parameter

    def _initial_value(self, shape: Shape, init: Union[str, float, np.ndarray], fan_in: Optional[int]) -> np.ndarray:
        if isinstance(init, np.ndarray):
            if init.shape != shape:
                raise ShapeError('ParamStore.add', f'initial value shape {init.shape} != declared {shape}')
            return np.array(init, dtype=self.dtype)
        if init == 'zeros':
            return np.zeros(shape, dtype=self.dtype)
        if init == 'ones':
            return np.ones(shape, dtype=self.dtype)
        if init == 'he_normal':
            fan = fan_in if fan_in is not None else int(np.prod(shape[:-1])) or 1
            return (self.rng.standard_normal(shape) * np.sqrt(2.0 / fan)).astype(self.dtype)
        if isinstance(init, (int, float)):
            return np.full(shape, init, dtype=self.dtype)
        raise InputValidationError('initializer', detail=f'unknown initializer {init!r}')

    def trainable(self) -> Iterator[Parameter]:
        return (p for p in self._entries.values() if p.trainable)

    def count(self, trainable_only: bool = True, prefix: str = '') -> int:
        """Exact number of scalars

        Args:
            trainable_only: skip buffers
            prefix: only count entries whose name starts with this path prefix

        Returns:
            int
        """
        return sum(
            p.size
            for p in self._entries.values()
            if (p.trainable or not trainable_only) and p.name.startswith(prefix)
        )

    def zero_grad(self) -> None:
        for parameter in self._entries.values():
            parameter.grad.fill(0.0)

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copies of every value array, keyed by name"""
        return {name: p.value.copy() for name, p in self._entries.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """Overwrite values in place from a name → array mapping

        Args:
            state: arrays for every entry of the store

        Returns:

        """
        missing = [name for name in self._entries if name not in state]
        unexpected = [name for name in state if name not in self._entries]
        if missing or unexpected:
            log.error('State mismatch, missing: %s, unexpected: %s', missing, unexpected)
            raise InputValidationError(
                'parameter names', detail=f'missing={missing[:5]} unexpected={unexpected[:5]}'
            )
        for name, parameter in self._entries.items():
            array = state[name]
            if tuple(array.shape) != parameter.shape:
                raise ShapeError('ParamStore.load_state_dict', f'{name}: {array.shape} != {parameter.shape}')
            parameter.value[...] = array.astype(self.dtype, copy=False)
