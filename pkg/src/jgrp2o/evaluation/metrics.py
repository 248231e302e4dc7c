import json
import logging
from typing import ClassVar, List, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, validator

from jgrp2o.exceptions import InputValidationError
from jgrp2o.jinja_env import env
from jgrp2o.utils.fs_handler import FSHandler, LocalFSHandler

log = logging.getLogger(__name__)


class EvalConfig(BaseModel):
    threshold_max: float = 80.0
    threshold_step: float = 1.0
    batch_size: int = 32
    template: str = 'report.html'

    class Config:
        extra = 'forbid'
        validate_assignment = True

    @validator('threshold_max', 'threshold_step', 'batch_size')
    def positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError('must be positive')
        return v

    @property
    def thresholds(self) -> np.ndarray:
        count = int(round(self.threshold_max / self.threshold_step)) + 1
        return np.arange(count) * self.threshold_step


def _as_frames(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    preds_array = np.asarray(preds, dtype=np.float64)
    gts_array = np.asarray(gts, dtype=np.float64)
    if preds_array.shape != gts_array.shape or preds_array.ndim != 3 or preds_array.shape[-1] != 3:
        log.error('Prediction shape %s does not match ground truth %s', preds_array.shape, gts_array.shape)
        raise InputValidationError('poses', expected=gts_array.shape, actual=preds_array.shape)
    return preds_array, gts_array


def joint_errors(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> np.ndarray:
    """(frames, N) Euclidean distances in mm"""
    preds_array, gts_array = _as_frames(preds, gts)
    return np.linalg.norm(preds_array - gts_array, axis=-1)


def mean_3d_error(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> Tuple[float, np.ndarray]:
    """Mean joint distance over frames and joints, plus the per-joint means

    Args:
        preds: frames of (N, 3) predicted joints in mm
        gts: frames of (N, 3) ground-truth joints in mm

    Returns:
        (overall mean, (N,) per-joint means)
    """
    errors = joint_errors(preds, gts)
    if errors.shape[0] == 0:
        return 0.0, np.zeros(errors.shape[1])
    per_joint = errors.mean(axis=0)
    return float(per_joint.mean()), per_joint


def success_curve(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray], thresholds: Sequence[float]) -> np.ndarray:
    """Fraction of frames whose worst joint error is strictly below each threshold"""
    thresholds_array = np.asarray(thresholds, dtype=np.float64)
    if np.any(np.diff(thresholds_array) < 0):
        log.error('Thresholds are not sorted: %s', thresholds_array)
        raise InputValidationError('thresholds', detail='must be sorted ascending')
    errors = joint_errors(preds, gts)
    if errors.shape[0] == 0:
        return np.zeros(len(thresholds_array))
    worst = errors.max(axis=1)
    return (worst[None, :] < thresholds_array[:, None]).mean(axis=1)


class EvalReport(BaseModel):
    mean_error_mm: float
    per_joint_mm: List[float]
    curve: List[Tuple[float, float]]
    frames: int
    _template_name: ClassVar[str] = 'report.html'

    def __str__(self) -> str:
        return f'<EvalReport frames={self.frames} mean_error_mm={self.mean_error_mm:.3f}>'

    @classmethod
    def build(
        cls, preds: Sequence[np.ndarray], gts: Sequence[np.ndarray], thresholds: Sequence[float]
    ) -> 'EvalReport':
        mean, per_joint = mean_3d_error(preds, gts)
        fractions = success_curve(preds, gts, thresholds)
        return cls(
            mean_error_mm=mean,
            per_joint_mm=[float(e) for e in per_joint],
            curve=[(float(t), float(f)) for t, f in zip(thresholds, fractions)],
            frames=len(preds),
        )

    def curve_table(self) -> pd.DataFrame:
        return pd.DataFrame(self.curve, columns=['threshold_mm', 'fraction'])

    def per_joint_table(self) -> pd.DataFrame:
        return pd.DataFrame({'joint': range(len(self.per_joint_mm)), 'mean_error_mm': self.per_joint_mm})

    def get_html(self, template_name: str = '') -> str:
        template = env.get_template(template_name or self._template_name)
        return template.render(
            report=self,
            curve=self.curve_table().to_dict('records'),
            per_joint=self.per_joint_table().to_dict('records'),
        )

    def dump(self, base_path: str, fs_handler: FSHandler = LocalFSHandler(), template_name: str = '') -> None:
        """Write report.json, curve.csv, per_joint.csv and report.html into ``base_path``"""
        fs_handler.write(fs_handler.join_path(base_path, 'report.json'), json.dumps(self.dict(), indent=2))
        fs_handler.write(
            fs_handler.join_path(base_path, 'curve.csv'),
            self.curve_table().to_csv(index=False, lineterminator='\n'),
        )
        fs_handler.write(
            fs_handler.join_path(base_path, 'per_joint.csv'),
            self.per_joint_table().to_csv(index=False, lineterminator='\n'),
        )
        fs_handler.write(fs_handler.join_path(base_path, 'report.html'), self.get_html(template_name))
        log.info('Wrote %s to %s', self, base_path)
