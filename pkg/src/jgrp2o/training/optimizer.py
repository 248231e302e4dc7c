import logging
from typing import Dict, Optional

import numpy as np
from pydantic import BaseModel, validator

from jgrp2o.exceptions import OptimizerStateError
from jgrp2o.numerics.params import ParamStore

log = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    learning_rate: float = 1e-4
    lr_decay: float = 0.96
    weight_decay: float = 5e-5
    batch_size: int = 32
    epochs: int = 1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    checkpoint_every: int = 0
    validate_each_epoch: bool = False

    class Config:
        extra = 'forbid'
        validate_assignment = True

    @validator('learning_rate', 'batch_size', 'epochs', 'epsilon')
    def positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError('must be positive')
        return v

    @validator('lr_decay')
    def decay_range(cls, v: float) -> float:
        if not 0 < v <= 1:
            raise ValueError('lr_decay must lie in (0, 1]')
        return v

    @validator('weight_decay', 'checkpoint_every')
    def non_negative(cls, v: float) -> float:
        if v < 0:
            raise ValueError('must be >= 0')
        return v

    @validator('beta1', 'beta2')
    def moment_rate(cls, v: float) -> float:
        if not 0 <= v < 1:
            raise ValueError('must lie in [0, 1)')
        return v

    def learning_rate_at(self, epoch: int) -> float:
        """Learning rate during ``epoch`` (0-based): lr0 * decay^epoch"""
        return self.learning_rate * self.lr_decay ** epoch


class AdamState:
    """First and second moments per trainable entry plus the step counter."""

    def __init__(self, params: ParamStore):
        self.step = 0
        self.m: Dict[str, np.ndarray] = {p.name: np.zeros_like(p.value) for p in params.trainable()}
        self.v: Dict[str, np.ndarray] = {p.name: np.zeros_like(p.value) for p in params.trainable()}

    def __str__(self) -> str:
        return f'<AdamState step={self.step} entries={len(self.m)}>'

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {f'adam/m/{name}': value.copy() for name, value in self.m.items()}
        state.update({f'adam/v/{name}': value.copy() for name, value in self.v.items()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], step: int) -> None:
        for moments, prefix in ((self.m, 'adam/m/'), (self.v, 'adam/v/')):
            for name, value in moments.items():
                key = prefix + name
                if key not in state:
                    raise OptimizerStateError(f'missing optimizer entry {key}')
                if state[key].shape != value.shape:
                    raise OptimizerStateError(f'{key} has shape {state[key].shape}, parameter has {value.shape}')
                value[...] = state[key]
        self.step = step


def adam_step(params: ParamStore, state: AdamState, config: TrainConfig, lr: Optional[float] = None) -> None:
    """One Adam update with bias correction; decoupled decay theta <- theta (1 - lr wd) runs first

    Args:
        params: store whose gradients were accumulated for this step
        state: moments, updated in place
        config: betas, epsilon and weight decay
        lr: learning rate, defaults to ``config.learning_rate``

    Returns:

    """
    lr = config.learning_rate if lr is None else lr
    state.step += 1
    t = state.step
    correction1 = 1.0 - config.beta1 ** t
    correction2 = 1.0 - config.beta2 ** t

    for parameter in params.trainable():
        m = state.m.get(parameter.name)
        v = state.v.get(parameter.name)
        if m is None or v is None or m.shape != parameter.shape or v.shape != parameter.shape:
            log.error('Optimizer state does not match %s', parameter)
            raise OptimizerStateError(f'moments for {parameter.name} do not match shape {parameter.shape}')

        g = parameter.grad
        if parameter.decay and config.weight_decay:
            parameter.value *= 1.0 - lr * config.weight_decay
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * g * g
        parameter.value -= lr * (m / correction1) / (np.sqrt(v / correction2) + config.epsilon)
