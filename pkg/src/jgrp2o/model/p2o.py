"""Pixel-to-offset head: dense per-pixel offsets towards every joint, aggregated by the voting weights."""
import logging
from typing import Any, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, root_validator

from jgrp2o.common_types import check_rank4, Mode, Weighting
from jgrp2o.exceptions import ContractError, ShapeError
from jgrp2o.model.jgr import VotingTensor
from jgrp2o.model.layers import Conv2d, Layer
from jgrp2o.numerics.params import ParamStore

log = logging.getLogger(__name__)

WEIGHT_SUM_TOLERANCE = 1e-4
BACKGROUND_Z = 1.0

OffsetMaps = np.ndarray
"""(B, H, W, 3N) offsets, joint-major: (du_1, dv_1, dz_1, ..., du_N, dv_N, dz_N)."""

PoseUVZ = np.ndarray
"""(B, N, 3) joints as (u, v, z); u, v in [0, 1] over the crop, z in [-1, 1]."""


class P2OConfig(BaseModel):
    weighting: Weighting = Weighting.VOTING

    class Config:
        extra = 'forbid'
        validate_assignment = True


class CoordinateGrid(BaseModel):
    """Pixel-centre coordinates of the offset-map grid.

    ``u``/``v`` are shared across the batch, ``z`` and ``valid`` are per frame with shape (B, R, R).
    """

    u: np.ndarray
    v: np.ndarray
    z: np.ndarray
    valid: np.ndarray

    class Config:
        arbitrary_types_allowed = True

    @root_validator(skip_on_failure=True)
    def check_shapes(cls, values: dict) -> dict:
        u, v, z, valid = values['u'], values['v'], values['z'], values['valid']
        if u.shape != v.shape or u.ndim != 2:
            raise ValueError(f'u {u.shape} and v {v.shape} must be equal (R, R) arrays')
        if z.ndim != 3 or z.shape[1:] != u.shape or valid.shape != z.shape:
            raise ValueError(f'z {z.shape} and valid {valid.shape} must be (B, {u.shape[0]}, {u.shape[1]})')
        return values

    def __str__(self) -> str:
        return f'<CoordinateGrid batch={self.batch} resolution={self.resolution}>'

    @property
    def batch(self) -> int:
        return self.z.shape[0]

    @property
    def resolution(self) -> int:
        return self.u.shape[0]

    def coordinates(self) -> np.ndarray:
        """(B, R*R, 3) stacked (u, v, z) per pixel, row-major"""
        b = self.batch
        uv = np.stack([self.u.reshape(-1), self.v.reshape(-1)], axis=-1)
        uv = np.broadcast_to(uv, (b,) + uv.shape)
        return np.concatenate([uv, self.z.reshape(b, -1, 1)], axis=-1)

    @classmethod
    def stack(cls, grids: Sequence['CoordinateGrid']) -> 'CoordinateGrid':
        first = grids[0]
        return cls(
            u=first.u,
            v=first.v,
            z=np.concatenate([g.z for g in grids], axis=0),
            valid=np.concatenate([g.valid for g in grids], axis=0),
        )


def grid_from_depth(depth: np.ndarray, valid: np.ndarray, resolution: int) -> CoordinateGrid:
    """Coordinate grid of a batch of normalised depth maps

    Args:
        depth: (B, H, W) normalised depth
        valid: (B, H, W) boolean validity mask
        resolution: grid size R; must divide H and W

    Returns:
        CoordinateGrid
    """
    if depth.ndim != 3 or valid.shape != depth.shape:
        raise ShapeError('make_coordinate_grid', f'depth {depth.shape} and mask {valid.shape} must be equal (B, H, W)')
    b, h, w = depth.shape
    if resolution <= 0 or h % resolution or w % resolution:
        log.error('Grid resolution %s does not divide the %sx%s input', resolution, h, w)
        raise ShapeError('make_coordinate_grid', f'resolution {resolution} does not divide input {h}x{w}')

    fh, fw = h // resolution, w // resolution
    blocks = depth.reshape(b, resolution, fh, resolution, fw)
    mask = valid.reshape(b, resolution, fh, resolution, fw).astype(depth.dtype)
    counts = mask.sum(axis=(2, 4))
    sums = (blocks * mask).sum(axis=(2, 4))
    cell_valid = counts > 0
    z = np.where(cell_valid, sums / np.maximum(counts, 1), BACKGROUND_Z).astype(depth.dtype)

    centers = (np.arange(resolution, dtype=depth.dtype) + 0.5) / resolution
    u, v = np.meshgrid(centers, centers)
    return CoordinateGrid(u=u, v=v, z=z, valid=cell_valid)


def make_coordinate_grid(frame: Any, resolution: int) -> CoordinateGrid:
    """Grid of a single DepthFrame (batch of one)"""
    return grid_from_depth(frame.pixels[None], frame.mask[None], resolution)


def _check_alignment(offsets: OffsetMaps, grid: CoordinateGrid, weights: VotingTensor) -> None:
    check_rank4('aggregate_joints', offsets)
    b, h, w, channels = offsets.shape
    n = weights.joints
    if channels != 3 * n:
        raise ShapeError('aggregate_joints', f'{channels} offset channels for {n} joints')
    if weights.weights.shape[:3] != (b, h, w) or (grid.batch, grid.resolution, grid.resolution) != (b, h, w):
        raise ShapeError(
            'aggregate_joints',
            f'offsets {offsets.shape}, weights {weights.weights.shape}, grid {grid.z.shape} are not aligned',
        )


def aggregate_joints(offsets: OffsetMaps, grid: CoordinateGrid, weights: VotingTensor) -> PoseUVZ:
    """Joint coordinates as the voting-weighted average of per-pixel estimates c_p + dc

    Args:
        offsets: (B, H, W, 3N) joint-major offset maps
        grid: pixel coordinates at the offset-map resolution
        weights: normalised per-joint weights

    Returns:
        (B, N, 3) pose
    """
    _check_alignment(offsets, grid, weights)
    sums = weights.weights.sum(axis=(1, 2))
    deviation = float(np.max(np.abs(sums - 1.0)))
    if deviation > WEIGHT_SUM_TOLERANCE:
        log.error('Voting weights are not normalised, max deviation %s', deviation)
        raise ContractError(f'per-joint voting weights must sum to 1, max deviation {deviation:.3e}')

    b, h, w, _ = offsets.shape
    n = weights.joints
    w_flat = weights.flat()
    estimates = offsets.reshape(b, h * w, n, 3) + grid.coordinates()[:, :, None, :]
    return np.einsum('bik,bikc->bkc', w_flat, estimates)


def aggregate_joints_backward(
    dpose: np.ndarray, offsets: OffsetMaps, grid: CoordinateGrid, weights: VotingTensor
) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients w.r.t. the offsets and the voting weights, shaped like their inputs"""
    b, h, w, _ = offsets.shape
    n = weights.joints
    w_flat = weights.flat()
    doffsets = w_flat[..., None] * dpose[:, None, :, :]
    estimates = offsets.reshape(b, h * w, n, 3) + grid.coordinates()[:, :, None, :]
    dweights = np.einsum('bkc,bikc->bik', dpose, estimates)
    return doffsets.reshape(offsets.shape), dweights.reshape(weights.weights.shape)


def compute_offset_targets(pose: PoseUVZ, grid: CoordinateGrid) -> OffsetMaps:
    """dc*_ki = c*_k - c_i for every pixel i and joint k; z targets are not clamped

    Args:
        pose: (B, N, 3) ground truth in normalised units
        grid: grid at the offset-map resolution

    Returns:
        (B, R, R, 3N) joint-major targets
    """
    if pose.ndim != 3 or pose.shape[2] != 3 or pose.shape[0] != grid.batch:
        raise ShapeError('compute_offset_targets', f'pose {pose.shape} vs grid batch {grid.batch}')
    b, n, _ = pose.shape
    r = grid.resolution
    targets = pose[:, None, :, :] - grid.coordinates()[:, :, None, :]
    return targets.reshape(b, r, r, 3 * n)


class OffsetHead(Layer):
    """1x1 conv C -> 3N, no activation."""

    def __init__(self, params: ParamStore, name: str, channels: int, joints: int):
        super().__init__(params, name)
        self.joints = joints
        self.conv = Conv2d(params, f'{name}/conv', channels, 3 * joints)

    def forward(self, x: np.ndarray, mode: Mode = Mode.EVAL) -> Tuple[OffsetMaps, Any]:
        if x.shape[-1] != self.conv.in_channels:
            raise ShapeError(self.name, f'expected {self.conv.in_channels} channels, got {x.shape[-1]}')
        return self.conv.forward(x, mode)

    def predict_offsets(self, x: np.ndarray) -> OffsetMaps:
        return self.forward(x)[0]

    def backward(self, dy: np.ndarray, cache: Any) -> np.ndarray:
        return self.conv.backward(dy, cache)
