"""Coordinate and offset regression losses and their combination over the stacked stages."""
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, validator

from jgrp2o.exceptions import InputValidationError, NonFiniteLossError, ShapeError

log = logging.getLogger(__name__)


class LossConfig(BaseModel):
    delta: float = 1.0
    beta: float = 0.0001
    stages: int = 2

    class Config:
        extra = 'forbid'
        validate_assignment = True

    @validator('delta')
    def positive_delta(cls, v: float) -> float:
        if v <= 0:
            raise ValueError('huber delta must be positive')
        return v

    @validator('beta')
    def non_negative_beta(cls, v: float) -> float:
        if v < 0:
            raise ValueError('beta must be >= 0')
        return v

    @validator('stages')
    def at_least_one_stage(cls, v: int) -> int:
        if v < 1:
            raise ValueError('at least one stage is required')
        return v


class LossReport(BaseModel):
    total: float
    coordinate: List[float]
    offset: List[float]

    def __str__(self) -> str:
        return f'<LossReport total={self.total:.6f} stages={len(self.coordinate)}>'

    def as_row(self) -> Dict[str, float]:
        """Flat ``total, coord_s1, offset_s1, ...`` mapping used by the training log"""
        row = {'total': self.total}
        for stage, (coord, offset) in enumerate(zip(self.coordinate, self.offset), start=1):
            row[f'coord_s{stage}'] = coord
            row[f'offset_s{stage}'] = offset
        return row


def huber(x: np.ndarray, delta: float = 1.0) -> np.ndarray:
    """0.5 x^2 inside [-delta, delta], delta (|x| - delta / 2) outside; elementwise"""
    a = np.abs(x)
    return np.where(a <= delta, 0.5 * x * x, delta * (a - 0.5 * delta))


def huber_grad(x: np.ndarray, delta: float = 1.0) -> np.ndarray:
    return np.clip(x, -delta, delta)


def _batch_size(x: np.ndarray) -> int:
    return x.shape[0] if x.ndim > 0 else 1


def coordinate_loss(pred: np.ndarray, gt: np.ndarray, delta: float = 1.0) -> float:
    """Huber loss summed over joints and axes, averaged over the batch

    Args:
        pred: (B, N, 3) predicted pose
        gt: (B, N, 3) ground truth
        delta: huber threshold

    Returns:
        float
    """
    if pred.shape != gt.shape:
        log.error('Pose shapes differ: %s vs %s', pred.shape, gt.shape)
        raise ShapeError('coordinate_loss', f'prediction {pred.shape} vs ground truth {gt.shape}')
    return float(huber(pred - gt, delta).sum() / _batch_size(pred))


def coordinate_loss_grad(pred: np.ndarray, gt: np.ndarray, delta: float = 1.0) -> np.ndarray:
    return huber_grad(pred - gt, delta) / _batch_size(pred)


def offset_loss(pred: np.ndarray, target: np.ndarray, delta: float = 1.0) -> float:
    """Huber loss summed over pixels, joints and axes, averaged over the batch"""
    if pred.shape != target.shape:
        log.error('Offset map shapes differ: %s vs %s', pred.shape, target.shape)
        raise ShapeError('offset_loss', f'prediction {pred.shape} vs target {target.shape}')
    return float(huber(pred - target, delta).sum() / _batch_size(pred))


def offset_loss_grad(pred: np.ndarray, target: np.ndarray, delta: float = 1.0) -> np.ndarray:
    return huber_grad(pred - target, delta) / _batch_size(pred)


def _check_stage_count(poses: Sequence[np.ndarray], offsets: Sequence[np.ndarray], config: LossConfig) -> None:
    if len(poses) != config.stages or len(offsets) != config.stages:
        log.error('Got %s pose and %s offset stage outputs for %s stages', len(poses), len(offsets), config.stages)
        raise InputValidationError('stage outputs', expected=config.stages, actual=(len(poses), len(offsets)))


def total_loss(
    poses: Sequence[np.ndarray],
    offsets: Sequence[np.ndarray],
    pose_gt: np.ndarray,
    offset_targets: np.ndarray,
    config: LossConfig,
) -> LossReport:
    """sum over stages of coord_s + beta * offset_s, every stage supervised against the same targets

    Args:
        poses: per-stage (B, N, 3) predictions
        offsets: per-stage (B, R, R, 3N) offset maps
        pose_gt: (B, N, 3) ground truth
        offset_targets: (B, R, R, 3N) ground-truth offsets
        config: delta, beta and the expected stage count

    Returns:
        LossReport
    """
    _check_stage_count(poses, offsets, config)
    coordinate = [coordinate_loss(p, pose_gt, config.delta) for p in poses]
    offset = [offset_loss(o, offset_targets, config.delta) for o in offsets]
    total = sum(c + config.beta * o for c, o in zip(coordinate, offset))
    return LossReport(total=total, coordinate=coordinate, offset=offset)


def total_loss_backward(
    poses: Sequence[np.ndarray],
    offsets: Sequence[np.ndarray],
    pose_gt: np.ndarray,
    offset_targets: np.ndarray,
    config: LossConfig,
) -> Tuple[List[np.ndarray], List[Optional[np.ndarray]]]:
    """Per-stage gradients of the total loss w.r.t. the poses and the offset maps (None when beta is 0)"""
    _check_stage_count(poses, offsets, config)
    dposes = [coordinate_loss_grad(p, pose_gt, config.delta) for p in poses]
    doffsets: List[Optional[np.ndarray]] = [
        config.beta * offset_loss_grad(o, offset_targets, config.delta) if config.beta else None for o in offsets
    ]
    return dposes, doffsets


def check_finite(report: LossReport, step: Optional[int] = None) -> None:
    for stage, (coord, offset) in enumerate(zip(report.coordinate, report.offset), start=1):
        for term, value in (('coordinate', coord), ('offset', offset)):
            if not math.isfinite(value):
                log.error('Non-finite %s loss %s in stage %s at step %s', term, value, stage, step)
                raise NonFiniteLossError(stage, term, value, step)
