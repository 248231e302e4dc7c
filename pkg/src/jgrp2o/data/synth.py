"""Procedural capsule-skinned hand and an analytic ray-capsule depth renderer."""
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, root_validator

from jgrp2o.data.camera import CameraIntrinsics, xyz_to_uvz
from jgrp2o.data.frame import crop_and_normalize, hand_center, Sample
from jgrp2o.exceptions import DataError

log = logging.getLogger(__name__)

MAX_RETRIES = 100
NEAR_PLANE = 10.0

Vector = Tuple[float, float, float]
Limits = Tuple[float, float]


class HandModel(BaseModel):
    """Kinematic tree of joints; joint ``k`` ends a bone from ``parents[k]`` along ``offsets[k]`` (rest pose, mm).

    ``radii[k]`` is the capsule radius of that bone; the root is drawn as a sphere of ``radii[0]``.
    ``flex[k]`` and ``spread[k]`` bound the bend about the bone's x and z axes in degrees.
    """

    names: List[str]
    parents: List[int]
    offsets: List[Vector]
    radii: List[float]
    flex: List[Limits]
    spread: List[Limits]

    class Config:
        allow_mutation = False

    @root_validator(skip_on_failure=True)
    def check_tree(cls, values: dict) -> dict:
        n = len(values['names'])
        for field in ('parents', 'offsets', 'radii', 'flex', 'spread'):
            if len(values[field]) != n:
                raise ValueError(f'{field} has {len(values[field])} entries for {n} joints')
        parents = values['parents']
        if n == 0 or parents[0] != -1:
            raise ValueError('joint 0 must be the root (parent -1)')
        for k in range(1, n):
            if not 0 <= parents[k] < k:
                raise ValueError(f'joint {k} must have an earlier parent, got {parents[k]}')
            if np.linalg.norm(values['offsets'][k]) <= 0:
                raise ValueError(f'bone ending at joint {k} has zero length')
        for k, (low, high) in enumerate(values['flex']):
            if low > high or values['spread'][k][0] > values['spread'][k][1]:
                raise ValueError(f'joint {k} has an empty angle range')
        if any(r <= 0 for r in values['radii']):
            raise ValueError('radii must be positive')
        return values

    def __str__(self) -> str:
        return f'<HandModel joints={self.joints}>'

    @property
    def joints(self) -> int:
        return len(self.names)

    @classmethod
    def sphere(cls, radius: float) -> 'HandModel':
        """Degenerate one-joint hand rendered as a single sphere"""
        return cls(
            names=['root'], parents=[-1], offsets=[(0.0, 0.0, 0.0)], radii=[radius], flex=[(0, 0)], spread=[(0, 0)]
        )

    @classmethod
    def default(cls) -> 'HandModel':
        """14-joint hand matching the ``synth14`` topology; palm faces the camera, fingers point to -y"""
        fingers = [('index', -22.0, 70.0, 35.0), ('middle', -6.0, 75.0, 38.0), ('ring', 10.0, 70.0, 33.0),
                   ('pinky', 25.0, 60.0, 28.0)]
        names = ['palm', 'palm_left', 'palm_right', 'thumb_root', 'thumb_mid', 'thumb_tip']
        parents = [-1, 0, 0, 0, 3, 4]
        offsets: List[Vector] = [(0, 0, 0), (-32, 12, 0), (32, 12, 0), (-30, -2, 0), (-14, -22, 0), (-8, -20, 0)]
        radii = [30.0, 16.0, 16.0, 11.0, 10.0, 9.0]
        flex: List[Limits] = [(0, 0), (0, 0), (0, 0), (0, 20), (0, 40), (0, 50)]
        spread: List[Limits] = [(0, 0), (0, 0), (0, 0), (-15, 15), (0, 0), (0, 0)]
        for finger, x, knuckle, tip in fingers:
            mid = len(names)
            names += [f'{finger}_mid', f'{finger}_tip']
            parents += [0, mid]
            offsets += [(x, -knuckle, 0), (0, -tip, 0)]
            radii += [9.0, 8.0]
            flex += [(0, 60), (0, 80)]
            spread += [(-8, 8), (0, 0)]
        return cls(names=names, parents=parents, offsets=offsets, radii=radii, flex=flex, spread=spread)

    @classmethod
    def chain(cls, joints: int) -> 'HandModel':
        """Single finger of ``joints`` joints (the ``chain<N>`` topologies): palm sphere plus a bone chain"""
        names = ['palm'] + [f'bone{k}' for k in range(1, joints)]
        parents = [-1] + list(range(joints - 1))
        offsets: List[Vector] = [(0, 0, 0)] + [(0, -40.0 if k == 1 else -30.0, 0) for k in range(1, joints)]
        radii = [28.0] + [10.0] * (joints - 1)
        flex: List[Limits] = [(0, 0)] + [(0, 60)] * (joints - 1)
        spread: List[Limits] = [(0, 0)] + [(-10, 10)] * (joints - 1)
        return cls(names=names, parents=parents, offsets=offsets, radii=radii, flex=flex, spread=spread)

    @classmethod
    def for_joints(cls, joints: int) -> 'HandModel':
        return cls.default() if joints == 14 else cls.chain(joints)


class PoseSampler(BaseModel):
    """Ranges of the global hand placement; finger angles come from the HandModel limits."""

    depth_min: float = 450.0
    depth_max: float = 550.0
    shift: float = 20.0
    roll: float = 45.0
    tilt: float = 20.0

    class Config:
        extra = 'forbid'

    @root_validator(skip_on_failure=True)
    def check_depth(cls, values: dict) -> dict:
        if not 0 < values['depth_min'] <= values['depth_max']:
            raise ValueError('depth range must satisfy 0 < depth_min <= depth_max')
        return values

    def sample(self, hand: HandModel, rng: np.random.Generator) -> np.ndarray:
        """Pose vector: root (x, y, z), roll, tilt x, tilt y, then per joint (flex, spread), degrees"""
        root = [
            rng.uniform(-self.shift, self.shift),
            rng.uniform(-self.shift, self.shift),
            rng.uniform(self.depth_min, self.depth_max),
            rng.uniform(-self.roll, self.roll),
            rng.uniform(-self.tilt, self.tilt),
            rng.uniform(-self.tilt, self.tilt),
        ]
        angles = [(rng.uniform(*hand.flex[k]), rng.uniform(*hand.spread[k])) for k in range(hand.joints)]
        return np.concatenate([np.array(root), np.array(angles).reshape(-1)])


def _rot_x(degrees: float) -> np.ndarray:
    c, s = math.cos(math.radians(degrees)), math.sin(math.radians(degrees))
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rot_y(degrees: float) -> np.ndarray:
    c, s = math.cos(math.radians(degrees)), math.sin(math.radians(degrees))
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rot_z(degrees: float) -> np.ndarray:
    c, s = math.cos(math.radians(degrees)), math.sin(math.radians(degrees))
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def forward_kinematics(hand: HandModel, pose: np.ndarray) -> np.ndarray:
    """Camera-space joint positions (N, 3) in mm; flexing bends fingers towards the camera (-z)"""
    root, angles = pose[:6], pose[6:].reshape(hand.joints, 2)
    orientation = [_rot_z(root[3]) @ _rot_y(root[5]) @ _rot_x(root[4])]
    positions = [np.array(root[:3], dtype=np.float64)]
    for k in range(1, hand.joints):
        parent = hand.parents[k]
        flex, spread = angles[k]
        rotation = orientation[parent] @ _rot_z(spread) @ _rot_x(flex)
        orientation.append(rotation)
        positions.append(positions[parent] + rotation @ np.asarray(hand.offsets[k], dtype=np.float64))
    return np.stack(positions)


def ray_directions(intrinsics: CameraIntrinsics, width: int, height: int) -> np.ndarray:
    """Unit ray per pixel centre, shape (H*W, 3)"""
    u, v = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    rays = np.stack([(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, np.ones_like(u)], -1)
    rays = rays.reshape(-1, 3)
    return rays / np.linalg.norm(rays, axis=1, keepdims=True)


def intersect_sphere(rays: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Ray parameter of the nearest hit from the origin, inf on a miss"""
    b = rays @ center
    h = b * b - (center @ center - radius * radius)
    t = b - np.sqrt(np.maximum(h, 0.0))
    return np.where((h >= 0) & (t > 0), t, np.inf)


def intersect_capsule(rays: np.ndarray, pa: np.ndarray, pb: np.ndarray, radius: float) -> np.ndarray:
    """Ray parameter of the nearest hit of a capsule (cylinder body plus spherical caps), inf on a miss"""
    ba = pb - pa
    oa = -pa
    baba = ba @ ba
    if baba <= 0:
        return intersect_sphere(rays, pa, radius)
    bard = rays @ ba
    baoa = ba @ oa
    rdoa = rays @ oa
    oaoa = oa @ oa
    a = baba - bard * bard
    b = baba * rdoa - baoa * bard
    c = baba * oaoa - baoa * baoa - radius * radius * baba
    h = b * b - a * c

    with np.errstate(divide='ignore', invalid='ignore'):
        t_body = (-b - np.sqrt(np.maximum(h, 0.0))) / a
    y = baoa + t_body * bard
    body = (h >= 0) & (a > 0) & (y > 0) & (y < baba) & (t_body > 0)
    caps = np.minimum(intersect_sphere(rays, pa, radius), intersect_sphere(rays, pb, radius))
    return np.where(body, t_body, caps)


def render_depth(hand: HandModel, joints: np.ndarray, intrinsics: CameraIntrinsics, size: int) -> np.ndarray:
    """z-buffer of the capsule hand, (size, size) depth in mm with 0 for background"""
    rays = ray_directions(intrinsics, size, size)
    nearest = intersect_sphere(rays, joints[0], hand.radii[0])
    for k in range(1, hand.joints):
        hit = intersect_capsule(rays, joints[hand.parents[k]], joints[k], hand.radii[k])
        nearest = np.minimum(nearest, hit)
    depth = np.where(np.isfinite(nearest), nearest * rays[:, 2], 0.0)
    return depth.reshape(size, size)


def _is_degenerate(joints: np.ndarray, intrinsics: CameraIntrinsics, size: int) -> bool:
    if np.any(joints[:, 2] <= NEAR_PLANE):
        return True
    u, v, _ = xyz_to_uvz(joints.mean(axis=0), intrinsics)
    return not (0 <= u < size - 1 and 0 <= v < size - 1)


def synth_raw(
    hand: HandModel,
    sampler: PoseSampler,
    intrinsics: CameraIntrinsics,
    rng: np.random.Generator,
    image_size: int = 96,
) -> Tuple[np.ndarray, np.ndarray]:
    """Raw (image_size, image_size) depth in mm and the (N, 3) camera-space joints of one random pose"""
    for attempt in range(MAX_RETRIES):
        joints = forward_kinematics(hand, sampler.sample(hand, rng))
        if _is_degenerate(joints, intrinsics, image_size):
            log.debug('Degenerate synthetic pose on attempt %s, resampling', attempt + 1)
            continue
        return render_depth(hand, joints, intrinsics, image_size), joints

    log.error('No valid synthetic pose after %s attempts', MAX_RETRIES)
    raise DataError(f'synthetic hand generation failed after {MAX_RETRIES} attempts')


def synth_generate(
    hand: HandModel,
    sampler: PoseSampler,
    intrinsics: CameraIntrinsics,
    rng: np.random.Generator,
    cube: float = 250.0,
    crop_size: int = 96,
    image_size: int = 96,
) -> Sample:
    """Render one random hand pose and crop it

    Args:
        hand: kinematic model
        sampler: placement ranges
        intrinsics: synthetic camera
        rng: generator; the sample is a pure function of its state
        cube: crop half-extent in mm
        crop_size: side of the cropped frame
        image_size: side of the rendered raw image

    Returns:
        Sample with exact labels
    """
    depth, joints = synth_raw(hand, sampler, intrinsics, rng, image_size)
    frame = crop_and_normalize(depth, hand_center(joints, intrinsics), cube, intrinsics, crop_size)
    return Sample.from_world(frame, joints)


def render_sample(
    hand: HandModel,
    joints: np.ndarray,
    intrinsics: CameraIntrinsics,
    cube: float = 250.0,
    crop_size: int = 96,
    image_size: int = 96,
    center: Optional[np.ndarray] = None,
) -> Sample:
    """Deterministic rendering of given joint positions, used for fixtures"""
    depth = render_depth(hand, joints, intrinsics, image_size)
    center = center if center is not None else hand_center(joints, intrinsics)
    return Sample.from_world(crop_and_normalize(depth, center, cube, intrinsics, crop_size), joints)
