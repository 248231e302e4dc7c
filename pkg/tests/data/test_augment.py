import numpy as np
import pytest
from pydantic import ValidationError

from jgrp2o.data.augment import (
    apply_transform,
    augment,
    AugmentConfig,
    sample_rng,
    sample_transform,
    transform_frame,
    transform_pose,
    Transform,
)
from jgrp2o.data.synth import HandModel, render_sample


@pytest.fixture()
def sample(camera_intrinsics):
    hand = HandModel.chain(4)
    joints = np.array([[0.0, 0.0, 500.0], [0.0, -40.0, 500.0], [5.0, -68.0, 495.0], [8.0, -95.0, 490.0]])
    return render_sample(hand, joints, camera_intrinsics, crop_size=32)


def test_identity_transform_keeps_the_sample(sample):
    assert apply_transform(sample, Transform()) is sample


def test_half_turn_mirrors_the_pose(sample):
    pose = transform_pose(sample.pose, Transform(angle=180.0), 250.0)

    np.testing.assert_allclose(pose[:, :2], 1.0 - sample.pose[:, :2], atol=1e-6)
    np.testing.assert_allclose(pose[:, 2], sample.pose[:, 2])


def test_half_turn_mirrors_the_image(sample):
    frame = transform_frame(sample.frame, Transform(angle=180.0))

    np.testing.assert_array_equal(frame.pixels, sample.frame.pixels[::-1, ::-1])
    np.testing.assert_array_equal(frame.mask, sample.frame.mask[::-1, ::-1])


def test_scale_and_depth_translation(sample):
    pose = transform_pose(sample.pose, Transform(scale=2.0, tz=25.0), 250.0)

    np.testing.assert_allclose(pose[:, :2], 0.5 + 2.0 * (sample.pose[:, :2] - 0.5))
    np.testing.assert_allclose(pose[:, 2], 2.0 * sample.pose[:, 2] + 0.1)


def test_planar_translation_in_crop_units(sample):
    pose = transform_pose(sample.pose, Transform(tx=50.0, ty=-25.0), 250.0)

    np.testing.assert_allclose(pose[:, :2] - sample.pose[:, :2], np.tile([0.1, -0.05], (4, 1)))


def test_augmented_world_pose_follows_the_crop(sample, augment_config):
    augmented = augment(sample, sample_rng(0, 0, 0), augment_config)

    np.testing.assert_allclose(augmented.frame.normalized_to_world(augmented.pose), augmented.pose_world)
    assert augmented.frame.crop == sample.frame.crop


def test_augmentation_is_deterministic(sample, augment_config):
    first = augment(sample, sample_rng(3, 1, 5), augment_config)
    second = augment(sample, sample_rng(3, 1, 5), augment_config)

    np.testing.assert_array_equal(first.pose, second.pose)
    np.testing.assert_array_equal(first.frame.pixels, second.frame.pixels)


def test_sample_streams_differ_per_epoch():
    config = AugmentConfig()

    assert sample_transform(config, sample_rng(0, 0, 1)) != sample_transform(config, sample_rng(0, 1, 1))


def test_sampled_transform_respects_ranges(rng):
    config = AugmentConfig(rotation=10.0, scale_min=0.95, scale_max=1.0, translation=2.0)

    for _ in range(20):
        transform = sample_transform(config, rng)
        assert abs(transform.angle) <= 10.0
        assert 0.95 <= transform.scale <= 1.0
        assert max(abs(transform.tx), abs(transform.ty), abs(transform.tz)) <= 2.0


@pytest.mark.parametrize('settings', [{'scale_min': 0.0}, {'scale_min': 1.2, 'scale_max': 1.1}, {'rotation': -1.0}])
def test_invalid_augment_config(settings):
    with pytest.raises(ValidationError):
        AugmentConfig(**settings)
