import logging
import math
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, root_validator

from jgrp2o.data.frame import DepthFrame, INVALID_DEPTH, Sample

log = logging.getLogger(__name__)


class AugmentConfig(BaseModel):
    enabled: bool = True
    rotation: float = 180.0
    scale_min: float = 0.9
    scale_max: float = 1.1
    translation: float = 10.0

    class Config:
        extra = 'forbid'
        validate_assignment = True

    @root_validator(skip_on_failure=True)
    def check_ranges(cls, values: dict) -> dict:
        if not 0 < values['scale_min'] <= values['scale_max']:
            raise ValueError('scale range must satisfy 0 < scale_min <= scale_max')
        if values['rotation'] < 0 or values['translation'] < 0:
            raise ValueError('rotation and translation ranges must be >= 0')
        return values


class Transform(NamedTuple):
    """In-plane rotation in degrees, 3D scale factor and translation in mm."""

    angle: float = 0.0
    scale: float = 1.0
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0


def sample_transform(config: AugmentConfig, rng: np.random.Generator) -> Transform:
    return Transform(
        angle=float(rng.uniform(-config.rotation, config.rotation)),
        scale=float(rng.uniform(config.scale_min, config.scale_max)),
        tx=float(rng.uniform(-config.translation, config.translation)),
        ty=float(rng.uniform(-config.translation, config.translation)),
        tz=float(rng.uniform(-config.translation, config.translation)),
    )


def _rotation(angle: float) -> np.ndarray:
    theta = math.radians(angle)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def transform_pose(pose: np.ndarray, transform: Transform, cube: float) -> np.ndarray:
    """Map a normalised pose: rotate and scale (u, v) about the crop centre, scale z, then translate"""
    rotation = _rotation(transform.angle)
    shift = np.array([transform.tx, transform.ty]) / (2.0 * cube)
    uv = 0.5 + transform.scale * (pose[:, :2] - 0.5) @ rotation.T + shift
    z = transform.scale * pose[:, 2:] + transform.tz / cube
    return np.concatenate([uv, z], axis=1)


def transform_frame(frame: DepthFrame, transform: Transform) -> DepthFrame:
    """Inverse-map every output pixel centre into the source crop and take the nearest source pixel"""
    size = frame.size
    cube = frame.crop.cube
    centers = (np.arange(size) + 0.5) / size
    u, v = np.meshgrid(centers, centers)
    shift = np.array([transform.tx, transform.ty]) / (2.0 * cube)
    target = np.stack([u.ravel(), v.ravel()], axis=1) - 0.5 - shift
    source = 0.5 + (target @ _rotation(transform.angle)) / transform.scale

    cols = np.floor(source[:, 0] * size).astype(np.int64)
    rows = np.floor(source[:, 1] * size).astype(np.int64)
    inside = (cols >= 0) & (cols < size) & (rows >= 0) & (rows < size)
    rows_c, cols_c = np.clip(rows, 0, size - 1), np.clip(cols, 0, size - 1)

    values = transform.scale * frame.pixels[rows_c, cols_c] + transform.tz / cube
    mask = inside & frame.mask[rows_c, cols_c] & (np.abs(values) <= 1.0)
    pixels = np.where(mask, values, INVALID_DEPTH).reshape(size, size)
    return DepthFrame(pixels=pixels, mask=mask.reshape(size, size), crop=frame.crop, intrinsics=frame.intrinsics)


def apply_transform(sample: Sample, transform: Transform) -> Sample:
    """Co-transform image and labels; the crop metadata is kept so the world pose is re-derived from it"""
    if transform == Transform():
        return sample
    frame = transform_frame(sample.frame, transform)
    pose = transform_pose(sample.pose, transform, sample.frame.crop.cube)
    return Sample(frame=frame, pose=pose, pose_world=frame.normalized_to_world(pose))


def augment(sample: Sample, rng: np.random.Generator, config: AugmentConfig = AugmentConfig()) -> Sample:
    """Random in-plane rotation, 3D scaling and 3D translation

    Args:
        sample: source sample
        rng: generator the transform is drawn from
        config: sampling ranges

    Returns:
        Sample
    """
    transform = sample_transform(config, rng)
    log.debug('Augmenting with %s', transform)
    return apply_transform(sample, transform)


def sample_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Generator of one (epoch, sample) pair, independent of loading order"""
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, index]))
