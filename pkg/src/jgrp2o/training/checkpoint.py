"""Versioned little-endian checkpoint container.

Layout: magic ``JGRP2O\\0``, version u32, metadata (u32 length + UTF-8 JSON), entry count u32, then per entry
name (u32 length + UTF-8), dtype code u8, rank u32, dims u32 each, raw row-major data.
"""
import json
import logging
import struct
from typing import Any, Dict, List

import numpy as np
from pydantic import BaseModel

from jgrp2o.exceptions import CheckpointFormatError, CheckpointVersionError, InputValidationError
from jgrp2o.utils.fs_handler import FSHandler, LocalFSHandler

log = logging.getLogger(__name__)

MAGIC = b'JGRP2O\0'
VERSION = 1
SUPPORTED_VERSIONS = (1,)

DTYPE_CODES = {1: np.dtype('<f4'), 2: np.dtype('<f8'), 3: np.dtype('<i8')}
CODE_OF = {np.dtype('float32'): 1, np.dtype('float64'): 2, np.dtype('int64'): 3}


class Checkpoint(BaseModel):
    """Everything needed to resume: parameters and buffers, Adam moments, counters and config snapshot."""

    version: int = VERSION
    config: Dict[str, Any] = {}
    joints: int
    epoch: int = 0
    epoch_step: int = 0
    global_step: int = 0
    rng_state: Dict[str, Any] = {}
    epoch_sums: Dict[str, float] = {}
    history: List[Dict[str, float]] = []
    params: Dict[str, np.ndarray] = {}
    optimizer: Dict[str, np.ndarray] = {}

    class Config:
        arbitrary_types_allowed = True

    def __str__(self) -> str:
        return f'<Checkpoint epoch={self.epoch} step={self.global_step} entries={len(self.params)}>'

    def metadata(self) -> Dict[str, Any]:
        return self.dict(exclude={'params', 'optimizer', 'version'})

    def check_joints(self, joints: int) -> None:
        if self.joints != joints:
            log.error('Checkpoint has %s joints, model expects %s', self.joints, joints)
            raise InputValidationError('joint count', expected=joints, actual=self.joints, detail='checkpoint')


def _pack_entry(name: str, array: np.ndarray) -> bytes:
    dtype = np.dtype(array.dtype)
    if dtype not in CODE_OF:
        raise InputValidationError('checkpoint dtype', detail=f'{name} has unsupported dtype {dtype}')
    encoded = name.encode('utf-8')
    header = struct.pack('<I', len(encoded)) + encoded + struct.pack('<BI', CODE_OF[dtype], array.ndim)
    header += struct.pack(f'<{array.ndim}I', *array.shape)
    return header + np.ascontiguousarray(array, dtype=DTYPE_CODES[CODE_OF[dtype]]).tobytes()


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    metadata = json.dumps(checkpoint.metadata()).encode('utf-8')
    entries = [('param/' + name, array) for name, array in checkpoint.params.items()]
    entries += [(name, array) for name, array in checkpoint.optimizer.items()]
    chunks: List[bytes] = [MAGIC, struct.pack('<I', checkpoint.version), struct.pack('<I', len(metadata)), metadata]
    chunks.append(struct.pack('<I', len(entries)))
    chunks.extend(_pack_entry(name, array) for name, array in entries)
    return b''.join(chunks)


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            log.error('Checkpoint %s truncated at offset %s reading %s', self.path, self.offset, what)
            raise CheckpointFormatError(self.path, self.offset, f'truncated while reading {what}')
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data: bytes, path: str = '<bytes>') -> Checkpoint:
    reader = _Reader(data, path)
    if reader.take(len(MAGIC), 'magic') != MAGIC:
        raise CheckpointFormatError(path, 0, 'not a checkpoint file (bad magic)')
    (version,) = reader.unpack('<I', 'version')
    if version not in SUPPORTED_VERSIONS:
        log.error('Checkpoint %s has unsupported version %s', path, version)
        raise CheckpointVersionError(version, SUPPORTED_VERSIONS)

    (length,) = reader.unpack('<I', 'metadata length')
    start = reader.offset
    try:
        metadata = json.loads(reader.take(length, 'metadata').decode('utf-8'))
    except ValueError as e:
        raise CheckpointFormatError(path, start, f'corrupt metadata: {e}')

    params: Dict[str, np.ndarray] = {}
    optimizer: Dict[str, np.ndarray] = {}
    (count,) = reader.unpack('<I', 'entry count')
    for _ in range(count):
        entry_offset = reader.offset
        (name_length,) = reader.unpack('<I', 'entry name length')
        try:
            name = reader.take(name_length, 'entry name').decode('utf-8')
        except UnicodeDecodeError:
            raise CheckpointFormatError(path, entry_offset, 'entry name is not UTF-8')
        code, rank = reader.unpack('<BI', f'{name} header')
        if code not in DTYPE_CODES:
            raise CheckpointFormatError(path, entry_offset, f'unknown dtype code {code} for {name}')
        shape = reader.unpack(f'<{rank}I', f'{name} shape') if rank else ()
        dtype = DTYPE_CODES[code]
        size = int(np.prod(shape)) * dtype.itemsize
        raw = np.frombuffer(reader.take(size, f'{name} data'), dtype=dtype)
        array = raw.reshape(shape).astype(dtype.newbyteorder('='))
        if name.startswith('param/'):
            params[name[len('param/'):]] = array
        else:
            optimizer[name] = array

    if reader.offset != len(data):
        raise CheckpointFormatError(path, reader.offset, f'{len(data) - reader.offset} trailing bytes')
    try:
        return Checkpoint(version=version, params=params, optimizer=optimizer, **metadata)
    except (TypeError, ValueError) as e:
        raise CheckpointFormatError(path, start, f'invalid metadata: {e}')


def save_checkpoint(path: str, checkpoint: Checkpoint, fs: FSHandler = LocalFSHandler()) -> None:
    fs.write(path, encode_checkpoint(checkpoint))
    log.info('Saved %s to %s', checkpoint, path)


def load_checkpoint(path: str, fs: FSHandler = LocalFSHandler()) -> Checkpoint:
    """Read and fully validate a checkpoint before returning it

    Args:
        path: checkpoint file
        fs: file system access

    Returns:
        Checkpoint
    """
    data = fs.read(path)
    checkpoint = decode_checkpoint(data, path)
    log.info('Loaded %s from %s', checkpoint, path)
    return checkpoint
