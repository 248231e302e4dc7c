import struct

import numpy as np
import pytest

from jgrp2o.exceptions import CheckpointFormatError, CheckpointVersionError, InputValidationError
from jgrp2o.model.network import JgrP2ONet
from jgrp2o.training.checkpoint import (
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    MAGIC,
    save_checkpoint,
)
from jgrp2o.training.optimizer import AdamState
from tests.training.factories import CheckpointFactory


@pytest.fixture()
def encoded(arrays):
    return encode_checkpoint(CheckpointFactory(params=arrays, optimizer={'adam/m/a/bias': np.ones(2)}))


def test_round_trip_keeps_arrays_and_dtypes(arrays):
    checkpoint = CheckpointFactory(params=arrays)

    decoded = decode_checkpoint(encode_checkpoint(checkpoint))

    assert list(decoded.params) == list(arrays)
    for name, array in arrays.items():
        assert decoded.params[name].dtype == array.dtype
        assert decoded.params[name].shape == array.shape
        assert np.array_equal(decoded.params[name], array)


def test_round_trip_keeps_metadata(checkpoint):
    decoded = decode_checkpoint(encode_checkpoint(checkpoint))

    assert decoded.metadata() == checkpoint.metadata()
    assert decoded.version == 1


def test_starts_with_magic(encoded):
    assert encoded.startswith(MAGIC)
    assert struct.unpack('<I', encoded[len(MAGIC):len(MAGIC) + 4]) == (1,)


def test_optimizer_entries_are_separate(encoded):
    decoded = decode_checkpoint(encoded)

    assert 'adam/m/a/bias' not in decoded.params
    assert np.array_equal(decoded.optimizer['adam/m/a/bias'], np.ones(2))


@pytest.mark.parametrize('keep', [0, 3, 9, 20, -1])
def test_truncated_file(encoded, keep):
    data = encoded[:keep] if keep >= 0 else encoded[:-1]

    with pytest.raises(CheckpointFormatError):
        decode_checkpoint(data, 'ckpt.bin')


def test_bad_magic(encoded):
    with pytest.raises(CheckpointFormatError) as e:
        decode_checkpoint(b'XXXXXXX' + encoded[len(MAGIC):])

    assert e.value.offset == 0


def test_unsupported_version(encoded):
    data = MAGIC + struct.pack('<I', 2) + encoded[len(MAGIC) + 4:]

    with pytest.raises(CheckpointVersionError) as e:
        decode_checkpoint(data)

    assert e.value.found == 2


def test_trailing_bytes(encoded):
    with pytest.raises(CheckpointFormatError):
        decode_checkpoint(encoded + b'\0')


def test_unsupported_dtype():
    checkpoint = CheckpointFactory(params={'flags': np.zeros(3, dtype=np.int32)})

    with pytest.raises(InputValidationError):
        encode_checkpoint(checkpoint)


def test_joint_count_check(checkpoint):
    checkpoint.check_joints(4)

    with pytest.raises(InputValidationError):
        checkpoint.check_joints(14)


def test_saved_model_predicts_identically(tiny_n4_config, tmp_path, rng):
    net = JgrP2ONet.from_config(tiny_n4_config)
    x = rng.uniform(-0.5, 0.5, (2, 32, 32, 1)).astype(net.dtype)
    path = str(tmp_path / 'checkpoint.bin')
    save_checkpoint(
        path,
        Checkpoint(joints=net.joints, params=net.params.state_dict(), optimizer=AdamState(net.params).state_dict()),
    )

    restored = JgrP2ONet.from_config(tiny_n4_config, seed=99)
    checkpoint = load_checkpoint(path)
    restored.params.load_state_dict(checkpoint.params)

    assert np.array_equal(restored.predict(x), net.predict(x))
