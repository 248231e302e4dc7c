"""On-disk and synthetic datasets of hand samples."""
import io
import json
import logging
import re
import zlib
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd
from PIL import Image
from pydantic import BaseModel, ValidationError, validator

from jgrp2o.common_types import DatasetFormat
from jgrp2o.data.camera import CameraIntrinsics, uvz_to_xyz
from jgrp2o.data.frame import crop_and_normalize, hand_center, Sample
from jgrp2o.data.synth import HandModel, PoseSampler, synth_generate, synth_raw
from jgrp2o.exceptions import DatasetFormatError, DatasetIOError, InputValidationError
from jgrp2o.utils.fs_handler import FSHandler, LocalFSHandler

log = logging.getLogger(__name__)

META_FILE = 'meta.json'
LABELS_FILE = 'labels.csv'
DEPTH_DIR = 'depth'
ICVL_LABELS_FILE = 'labels.txt'


class DataConfig(BaseModel):
    format: DatasetFormat = DatasetFormat.SYNTH
    root: Optional[str] = None
    split: str = 'train'
    test_split: str = 'test'
    count: int = 16
    test_count: int = 16
    cube: float = 250.0
    image_size: int = 96
    fx: float = 120.0
    fy: float = 120.0
    cx: float = 47.5
    cy: float = 47.5

    class Config:
        extra = 'forbid'
        validate_assignment = True

    @validator('count', 'test_count')
    def non_negative(cls, v: int) -> int:
        if v < 0:
            raise ValueError('must be >= 0')
        return v

    @validator('cube', 'image_size', 'fx', 'fy')
    def positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError('must be positive')
        return v

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy)


class NativeMeta(BaseModel):
    fx: float
    fy: float
    cx: float
    cy: float
    joints: int
    cube: float
    count: int

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy)


class HandDataset:
    """Indexable, lazily loaded sequence of samples."""

    joints: int

    def __len__(self) -> int:
        raise NotImplementedError

    def __getitem__(self, index: int) -> Sample:
        raise NotImplementedError

    def __iter__(self) -> Iterator[Sample]:
        return (self[i] for i in range(len(self)))

    def __str__(self) -> str:
        return f'<{self.__class__.__name__} samples={len(self)} joints={self.joints}>'


class SyntheticDataset(HandDataset):
    """Rendered on first access; sample ``i`` of a split depends only on (seed, split, i)."""

    def __init__(
        self,
        count: int,
        joints: int,
        seed: int = 0,
        split: str = 'train',
        config: DataConfig = DataConfig(),
        crop_size: int = 96,
        sampler: PoseSampler = PoseSampler(),
    ):
        self.count = count
        self.joints = joints
        self.seed = seed
        self.split = split
        self.config = config
        self.crop_size = crop_size
        self.sampler = sampler
        self.hand = HandModel.for_joints(joints)
        self._cache: Dict[int, Sample] = {}

    def __len__(self) -> int:
        return self.count

    def rng(self, index: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, zlib.crc32(self.split.encode()), index]))

    def __getitem__(self, index: int) -> Sample:
        if not 0 <= index < self.count:
            raise IndexError(index)
        if index not in self._cache:
            self._cache[index] = synth_generate(
                self.hand,
                self.sampler,
                self.config.intrinsics,
                self.rng(index),
                cube=self.config.cube,
                crop_size=self.crop_size,
                image_size=self.config.image_size,
            )
        return self._cache[index]

    def raw(self, index: int) -> Tuple[np.ndarray, np.ndarray]:
        """Uncropped depth in mm and camera-space joints of sample ``index``, drawn from the same stream"""
        return synth_raw(self.hand, self.sampler, self.config.intrinsics, self.rng(index), self.config.image_size)


def _parser_line(error: Exception) -> int:
    match = re.search(r'line (\d+)', str(error))
    return int(match.group(1)) if match else 0


def _read_table(fs: FSHandler, path: str, sep: str) -> pd.DataFrame:
    try:
        return pd.read_csv(io.BytesIO(fs.read(path)), sep=sep, header=None, skip_blank_lines=True, comment='#')
    except FileNotFoundError:
        log.error('Missing annotation file %s', path)
        raise DatasetIOError(path, 'missing annotation file')
    except pd.errors.EmptyDataError:
        return pd.DataFrame()
    except pd.errors.ParserError as e:
        log.error('Malformed annotation file %s: %s', path, e)
        raise DatasetFormatError(path, _parser_line(e), str(e))


def _numeric(table: pd.DataFrame, path: str) -> np.ndarray:
    values = table.apply(pd.to_numeric, errors='coerce')
    bad = values.isna().any(axis=1)
    if bad.any():
        line = int(np.flatnonzero(bad.to_numpy())[0]) + 1
        log.error('Non-numeric value in %s line %s', path, line)
        raise DatasetFormatError(path, line, 'expected numeric joint coordinates')
    return values.to_numpy(dtype=np.float64)


def _check_joint_columns(columns: int, joints: int, path: str) -> None:
    if columns % 3:
        raise DatasetFormatError(path, 1, f'{columns} coordinate columns is not a multiple of 3')
    if columns // 3 != joints:
        log.error('%s has %s joints, configuration expects %s', path, columns // 3, joints)
        raise InputValidationError('joint count', expected=joints, actual=columns // 3, detail=path)


def _read_depth(fs: FSHandler, path: str) -> np.ndarray:
    try:
        data = fs.read(path)
    except FileNotFoundError:
        log.error('Missing depth image %s', path)
        raise DatasetIOError(path, 'missing depth image')
    with Image.open(io.BytesIO(data)) as image:
        return np.array(image, dtype=np.float64)


class NativeDataset(HandDataset):
    """``root/{split}/meta.json``, ``depth/%06d.png`` (16-bit mm) and ``labels.csv`` (index + 3N world mm)."""

    def __init__(self, root: str, split: str, joints: int, crop_size: int = 96, fs: FSHandler = LocalFSHandler()):
        self.fs = fs
        self.folder = fs.join_path(root, split)
        self.crop_size = crop_size
        self.joints = joints
        meta_path = fs.join_path(self.folder, META_FILE)
        try:
            self.meta = NativeMeta(**json.loads(fs.read(meta_path)))
        except FileNotFoundError:
            log.error('Missing dataset metadata %s', meta_path)
            raise DatasetIOError(meta_path, 'missing dataset metadata')
        except (ValueError, ValidationError) as e:
            raise DatasetFormatError(meta_path, 1, str(e))
        if self.meta.joints != joints:
            log.error('%s declares %s joints, configuration expects %s', meta_path, self.meta.joints, joints)
            raise InputValidationError('joint count', expected=joints, actual=self.meta.joints, detail=meta_path)

        labels_path = fs.join_path(self.folder, LABELS_FILE)
        table = _read_table(fs, labels_path, ',')
        if table.empty:
            self.indices = np.zeros(0, dtype=np.int64)
            self.poses = np.zeros((0, joints, 3))
        else:
            _check_joint_columns(table.shape[1] - 1, joints, labels_path)
            values = _numeric(table, labels_path)
            self.indices = values[:, 0].astype(np.int64)
            self.poses = values[:, 1:].reshape(-1, joints, 3)
        log.info('Opened native dataset %s with %s samples', self.folder, len(self.indices))

    def __len__(self) -> int:
        return len(self.indices)

    def __getitem__(self, index: int) -> Sample:
        pose_world = self.poses[index]
        depth = _read_depth(self.fs, self.fs.join_path(self.folder, DEPTH_DIR, f'{self.indices[index]:06d}.png'))
        intrinsics = self.meta.intrinsics
        center = hand_center(pose_world, intrinsics)
        frame = crop_and_normalize(depth, center, self.meta.cube, intrinsics, self.crop_size)
        return Sample.from_world(frame, pose_world)


class IcvlDataset(HandDataset):
    """``root/labels.txt`` lines ``path u1 v1 z1 ... uN vN zN`` (pixels and mm), images relative to root."""

    def __init__(
        self,
        root: str,
        joints: int,
        intrinsics: CameraIntrinsics,
        cube: float = 250.0,
        crop_size: int = 96,
        fs: FSHandler = LocalFSHandler(),
    ):
        self.fs = fs
        self.root = root
        self.joints = joints
        self.intrinsics = intrinsics
        self.cube = cube
        self.crop_size = crop_size
        labels_path = fs.join_path(root, ICVL_LABELS_FILE)
        table = _read_table(fs, labels_path, r'\s+')
        if table.empty:
            self.paths: List[str] = []
            self.poses = np.zeros((0, joints, 3))
        else:
            _check_joint_columns(table.shape[1] - 1, joints, labels_path)
            self.paths = [str(p) for p in table.iloc[:, 0]]
            uvz = _numeric(table.iloc[:, 1:], labels_path).reshape(-1, joints, 3)
            self.poses = uvz_to_xyz(uvz, intrinsics)
        log.info('Opened ICVL-style dataset %s with %s samples', root, len(self.paths))

    def __len__(self) -> int:
        return len(self.paths)

    def __getitem__(self, index: int) -> Sample:
        pose_world = self.poses[index]
        depth = _read_depth(self.fs, self.fs.join_path(self.root, self.paths[index]))
        center = hand_center(pose_world, self.intrinsics)
        frame = crop_and_normalize(depth, center, self.cube, self.intrinsics, self.crop_size)
        return Sample.from_world(frame, pose_world)


def load_dataset(
    root: Optional[str],
    format: DatasetFormat,
    joints: int,
    crop_size: int = 96,
    split: str = 'train',
    config: DataConfig = DataConfig(),
    seed: int = 0,
    fs: FSHandler = LocalFSHandler(),
) -> HandDataset:
    """Open a dataset split

    Args:
        root: dataset folder (ignored for synthetic data)
        format: synth, native or icvl
        joints: joint count N the model expects
        crop_size: side of the cropped frames
        split: split name; selects the subfolder (native) or the seed stream (synth)
        config: data section of the run configuration
        seed: synthetic generation seed
        fs: file system access

    Returns:
        HandDataset
    """
    format = DatasetFormat(format)
    if format is DatasetFormat.SYNTH:
        count = config.test_count if split == config.test_split else config.count
        return SyntheticDataset(count, joints, seed, split, config, crop_size)
    if root is None:
        raise DatasetIOError('<unset>', f'data.root is required for {format.value} datasets')
    if format is DatasetFormat.NATIVE:
        return NativeDataset(root, split, joints, crop_size, fs)
    return IcvlDataset(root, joints, config.intrinsics, config.cube, crop_size, fs)


def encode_depth_png(depth: np.ndarray) -> bytes:
    """16-bit grayscale PNG of a depth map in mm"""
    buffer = io.BytesIO()
    Image.fromarray(np.clip(np.rint(depth), 0, 65535).astype(np.uint16)).save(buffer, format='PNG')
    return buffer.getvalue()


def write_native_dataset(
    root: str,
    split: str,
    frames: Iterable[Tuple[np.ndarray, np.ndarray]],
    intrinsics: CameraIntrinsics,
    cube: float,
    fs: FSHandler = LocalFSHandler(),
) -> int:
    """Write raw (depth mm, world joints mm) pairs in the native layout

    Args:
        root: dataset folder
        split: split subfolder
        frames: raw depth maps with their (N, 3) camera-space joints
        intrinsics: camera of the depth maps
        cube: crop half-extent stored in the metadata
        fs: file system access

    Returns:
        number of written samples
    """
    folder = fs.join_path(root, split)
    rows = []
    joints = 0
    for index, (depth, pose_world) in enumerate(frames):
        fs.write(fs.join_path(folder, DEPTH_DIR, f'{index:06d}.png'), encode_depth_png(depth))
        joints = pose_world.shape[0]
        rows.append([index] + [float(x) for x in pose_world.reshape(-1)])

    table = pd.DataFrame(rows)
    labels = table.to_csv(index=False, header=False, lineterminator='\n') if rows else ''
    fs.write(fs.join_path(folder, LABELS_FILE), labels)
    meta = NativeMeta(**intrinsics.dict(), joints=joints, cube=cube, count=len(rows))
    fs.write(fs.join_path(folder, META_FILE), json.dumps(meta.dict(), indent=2, sort_keys=True))
    log.info('Wrote %s samples to %s', len(rows), folder)
    return len(rows)
