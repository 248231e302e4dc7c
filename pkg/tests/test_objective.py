import numpy as np
import pytest
from pydantic import ValidationError

from jgrp2o.exceptions import InputValidationError, NonFiniteLossError, ShapeError
from jgrp2o.objective import (
    check_finite,
    coordinate_loss,
    coordinate_loss_grad,
    huber,
    huber_grad,
    LossConfig,
    LossReport,
    offset_loss,
    total_loss,
    total_loss_backward,
)


@pytest.mark.parametrize('x, expected', [(0.0, 0.0), (0.5, 0.125), (2.0, 1.5), (-2.0, 1.5), (1.0, 0.5)])
def test_huber_values(x, expected):
    assert float(huber(np.array(x))) == pytest.approx(expected)


def test_huber_is_even_and_monotone():
    x = np.linspace(0.0, 5.0, 101)

    np.testing.assert_allclose(huber(x), huber(-x))
    assert np.all(np.diff(huber(x)) >= 0)


def test_huber_gradient_is_clamped():
    np.testing.assert_allclose(huber_grad(np.array([-3.0, -0.25, 0.0, 0.7, 9.0]), 0.5), [-0.5, -0.25, 0.0, 0.5, 0.5])


def test_coordinate_loss_single_axis():
    gt = np.zeros((1, 3, 3))
    pred = gt.copy()
    pred[0, 1, 2] = 0.5

    assert coordinate_loss(pred, gt) == pytest.approx(0.125)


def test_coordinate_loss_averages_over_batch():
    gt = np.zeros((2, 1, 3))
    pred = gt.copy()
    pred[0, 0, 0] = 2.0

    assert coordinate_loss(pred, gt) == pytest.approx(0.75)
    np.testing.assert_allclose(coordinate_loss_grad(pred, gt)[0, 0], [0.5, 0.0, 0.0])


def test_offset_loss_single_channel():
    target = np.zeros((1, 2, 2, 3))
    pred = target.copy()
    pred[0, 1, 0, 2] = 2.0

    assert offset_loss(pred, target) == pytest.approx(1.5)


def test_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        coordinate_loss(np.zeros((1, 2, 3)), np.zeros((1, 3, 3)))
    with pytest.raises(ShapeError):
        offset_loss(np.zeros((1, 2, 2, 3)), np.zeros((1, 2, 2, 6)))


def _shifted(shape, value):
    x = np.zeros(shape)
    x.reshape(-1)[0] = value
    return x


def test_total_loss_composition():
    gt = np.zeros((1, 2, 3))
    targets = np.zeros((1, 2, 2, 6))
    poses = [_shifted(gt.shape, 1.5), _shifted(gt.shape, 2.5)]
    offsets = [_shifted(targets.shape, 10.5), _shifted(targets.shape, 20.5)]

    report = total_loss(poses, offsets, gt, targets, LossConfig())

    assert report.coordinate == pytest.approx([1.0, 2.0])
    assert report.offset == pytest.approx([10.0, 20.0])
    assert report.total == pytest.approx(3.003)
    assert report.as_row() == pytest.approx(
        {'total': 3.003, 'coord_s1': 1.0, 'offset_s1': 10.0, 'coord_s2': 2.0, 'offset_s2': 20.0}
    )


def test_total_loss_stage_count():
    gt = np.zeros((1, 2, 3))
    targets = np.zeros((1, 2, 2, 6))

    with pytest.raises(InputValidationError):
        total_loss([gt], [targets], gt, targets, LossConfig(stages=2))


def test_total_loss_backward(rng):
    gt = rng.standard_normal((2, 2, 3))
    targets = rng.standard_normal((2, 2, 2, 6))
    poses = [gt + rng.standard_normal(gt.shape) for _ in range(2)]
    offsets = [targets + rng.standard_normal(targets.shape) for _ in range(2)]
    config = LossConfig(beta=0.5)

    dposes, doffsets = total_loss_backward(poses, offsets, gt, targets, config)

    np.testing.assert_allclose(dposes[1], np.clip(poses[1] - gt, -1, 1) / 2)
    np.testing.assert_allclose(doffsets[0], 0.5 * np.clip(offsets[0] - targets, -1, 1) / 2)


def test_zero_beta_skips_offset_gradients(rng):
    gt = np.zeros((1, 2, 3))
    targets = np.zeros((1, 2, 2, 6))

    _, doffsets = total_loss_backward([gt], [targets], gt, targets, LossConfig(beta=0.0, stages=1))

    assert doffsets == [None]


@pytest.mark.parametrize('settings', [{'delta': 0.0}, {'beta': -1.0}, {'stages': 0}])
def test_invalid_loss_config(settings):
    with pytest.raises(ValidationError):
        LossConfig(**settings)


def test_check_finite():
    check_finite(LossReport(total=1.0, coordinate=[1.0], offset=[0.0]))

    with pytest.raises(NonFiniteLossError) as e:
        check_finite(LossReport(total=float('nan'), coordinate=[1.0, 2.0], offset=[0.0, float('inf')]), step=7)

    assert e.value.stage == 2
    assert e.value.term == 'offset'
    assert e.value.step == 7
