"""Cropped depth frames and the crop transform between normalised and original-image coordinates."""
import logging
from typing import Sequence

import numpy as np
from pydantic import BaseModel, root_validator, validator

from jgrp2o.data.camera import CameraIntrinsics, uvz_to_xyz, xyz_to_uvz
from jgrp2o.exceptions import DataError, ShapeError

log = logging.getLogger(__name__)

INVALID_DEPTH = 1.0


class CropTransform(BaseModel):
    """Window of the original image and depth range mapped onto the normalised crop.

    Normalised u = (u_px - u0) / width, v likewise, z = (z_mm - center_z) / cube.
    """

    center_u: float
    center_v: float
    center_z: float
    cube: float
    u0: float
    v0: float
    width: float
    height: float
    size: int

    class Config:
        allow_mutation = False

    @validator('cube', 'width', 'height', 'center_z')
    def positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError('must be positive')
        return v

    @classmethod
    def around(
        cls, center_uvz: Sequence[float], cube: float, intrinsics: CameraIntrinsics, size: int
    ) -> 'CropTransform':
        """Window spanned by a cube of half-extent ``cube`` mm around the hand centre"""
        cu, cv, cz = (float(c) for c in center_uvz)
        if cz <= 0:
            raise DataError(f'hand centre depth must be positive, got {cz}')
        half_u = cube * intrinsics.fx / cz
        half_v = cube * intrinsics.fy / cz
        return cls(
            center_u=cu,
            center_v=cv,
            center_z=cz,
            cube=cube,
            u0=cu - half_u,
            v0=cv - half_v,
            width=2 * half_u,
            height=2 * half_v,
            size=size,
        )

    def to_original(self, normalized: np.ndarray) -> np.ndarray:
        """(..., 3) normalised (u, v, z) to original-image pixels and depth in mm"""
        normalized = np.asarray(normalized, dtype=np.float64)
        return np.stack(
            [
                self.u0 + normalized[..., 0] * self.width,
                self.v0 + normalized[..., 1] * self.height,
                self.center_z + normalized[..., 2] * self.cube,
            ],
            axis=-1,
        )

    def to_normalized(self, uvz: np.ndarray) -> np.ndarray:
        uvz = np.asarray(uvz, dtype=np.float64)
        return np.stack(
            [
                (uvz[..., 0] - self.u0) / self.width,
                (uvz[..., 1] - self.v0) / self.height,
                (uvz[..., 2] - self.center_z) / self.cube,
            ],
            axis=-1,
        )

    def pixel_centers(self) -> np.ndarray:
        """Original-image coordinates sampled by the crop's columns and rows, shape (2, size)"""
        q = np.arange(self.size) + 0.5
        return np.stack([self.u0 + q * self.width / self.size, self.v0 + q * self.height / self.size])


class DepthFrame(BaseModel):
    pixels: np.ndarray
    mask: np.ndarray
    crop: CropTransform
    intrinsics: CameraIntrinsics

    class Config:
        arbitrary_types_allowed = True

    @root_validator(skip_on_failure=True)
    def check_pixels(cls, values: dict) -> dict:
        pixels, mask, crop = values['pixels'], values['mask'], values['crop']
        if pixels.shape != (crop.size, crop.size) or mask.shape != pixels.shape:
            raise ValueError(f'pixels {pixels.shape} and mask {mask.shape} must be ({crop.size}, {crop.size})')
        return values

    def __str__(self) -> str:
        return f'<DepthFrame size={self.size} valid={int(self.mask.sum())}>'

    @property
    def size(self) -> int:
        return self.crop.size

    def normalized_to_world(self, pose: np.ndarray) -> np.ndarray:
        return uvz_to_xyz(self.crop.to_original(pose), self.intrinsics)

    def world_to_normalized(self, pose_world: np.ndarray) -> np.ndarray:
        return self.crop.to_normalized(xyz_to_uvz(pose_world, self.intrinsics))


class Sample(BaseModel):
    """Frame plus the pose in normalised crop units and in camera-space mm."""

    frame: DepthFrame
    pose: np.ndarray
    pose_world: np.ndarray

    class Config:
        arbitrary_types_allowed = True
        copy_on_model_validation = 'none'

    @validator('pose', 'pose_world')
    def joint_triples(cls, v: np.ndarray) -> np.ndarray:
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f'expected (N, 3) joints, got {v.shape}')
        return v

    @classmethod
    def from_world(cls, frame: DepthFrame, pose_world: np.ndarray) -> 'Sample':
        pose_world = np.asarray(pose_world, dtype=np.float64)
        return cls(frame=frame, pose=frame.world_to_normalized(pose_world), pose_world=pose_world)

    @property
    def joints(self) -> int:
        return self.pose.shape[0]


def hand_center(pose_world: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Projected centre of mass of the joints, (u, v, z_mm)"""
    return xyz_to_uvz(np.asarray(pose_world, dtype=np.float64).mean(axis=0), intrinsics)


def crop_and_normalize(
    depth: np.ndarray,
    center_uvz: Sequence[float],
    cube: float,
    intrinsics: CameraIntrinsics,
    size: int = 96,
) -> DepthFrame:
    """Cut the cube-projected window around the hand, resize it by nearest sampling and normalise depth

    Args:
        depth: (H, W) raw depth in mm, 0 where the sensor has no reading
        center_uvz: hand centre in original pixels and mm
        cube: half-extent of the crop cube in mm
        intrinsics: camera of the raw image
        size: output side length

    Returns:
        DepthFrame with valid depths in [-1, 1] and every other pixel at 1
    """
    if depth.ndim != 2:
        raise ShapeError('crop_and_normalize', f'expected an (H, W) depth image, got {depth.shape}')
    if cube <= 0:
        raise DataError(f'crop cube must be positive, got {cube}')
    h, w = depth.shape
    cu, cv = float(center_uvz[0]), float(center_uvz[1])
    if not (-0.5 <= cu < w - 0.5 and -0.5 <= cv < h - 0.5):
        log.error('Hand centre (%s, %s) lies outside the %sx%s image', cu, cv, w, h)
        raise DataError(f'hand centre ({cu:.1f}, {cv:.1f}) is outside the {w}x{h} image')

    crop = CropTransform.around(center_uvz, cube, intrinsics, size)
    us, vs = crop.pixel_centers()
    cols = np.floor(us + 0.5).astype(np.int64)
    rows = np.floor(vs + 0.5).astype(np.int64)
    col_ok = (cols >= 0) & (cols < w)
    row_ok = (rows >= 0) & (rows < h)
    sampled = depth[np.clip(rows, 0, h - 1)[:, None], np.clip(cols, 0, w - 1)[None, :]].astype(np.float64)
    inside = row_ok[:, None] & col_ok[None, :]

    normalized = (sampled - crop.center_z) / cube
    mask = inside & (sampled > 0) & (np.abs(normalized) <= 1.0)
    if not mask.any():
        log.error('Empty crop around %s with cube %s mm', center_uvz, cube)
        raise DataError(f'crop around {tuple(center_uvz)} with cube {cube} mm contains no valid depth')

    pixels = np.where(mask, normalized, INVALID_DEPTH)
    return DepthFrame(pixels=pixels, mask=mask, crop=crop, intrinsics=intrinsics)
