import logging

import numpy as np
from pydantic import BaseModel, validator

from jgrp2o.exceptions import DataError

log = logging.getLogger(__name__)


class CameraIntrinsics(BaseModel):
    """Pinhole intrinsics in pixels. Pixel centres sit at integer coordinates."""

    fx: float = 120.0
    fy: float = 120.0
    cx: float = 47.5
    cy: float = 47.5

    class Config:
        extra = 'forbid'
        allow_mutation = False

    @validator('fx', 'fy')
    def positive_focal(cls, v: float) -> float:
        if v <= 0:
            raise ValueError('focal length must be positive')
        return v

    def __str__(self) -> str:
        return f'<CameraIntrinsics fx={self.fx} fy={self.fy} cx={self.cx} cy={self.cy}>'


def _check_depth(z: np.ndarray, operation: str) -> None:
    if np.any(z <= 0):
        log.error('%s got non-positive depth, min %s', operation, float(np.min(z)))
        raise DataError(f'{operation}: depth must be positive, min is {float(np.min(z))}')


def uvz_to_xyz(uvz: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Back-project image-plane points with depth in mm to camera coordinates in mm

    Args:
        uvz: (..., 3) pixel column, pixel row, depth in mm
        intrinsics: camera

    Returns:
        (..., 3) x, y, z in mm
    """
    uvz = np.asarray(uvz, dtype=np.float64)
    u, v, z = uvz[..., 0], uvz[..., 1], uvz[..., 2]
    _check_depth(z, 'uvz_to_xyz')
    x = (u - intrinsics.cx) * z / intrinsics.fx
    y = (v - intrinsics.cy) * z / intrinsics.fy
    return np.stack([x, y, z], axis=-1)


def xyz_to_uvz(xyz: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Project camera-space points in mm to pixel coordinates with depth in mm"""
    xyz = np.asarray(xyz, dtype=np.float64)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    _check_depth(z, 'xyz_to_uvz')
    u = x * intrinsics.fx / z + intrinsics.cx
    v = y * intrinsics.fy / z + intrinsics.cy
    return np.stack([u, v, z], axis=-1)
