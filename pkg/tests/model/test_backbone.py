import numpy as np
import pytest
from pydantic import ValidationError

from jgrp2o.common_types import Mode, PoolType, ResidualLayout
from jgrp2o.exceptions import ShapeError
from jgrp2o.model.backbone import BackboneConfig, Hourglass, StageBackbone, StageInput, Stem
from jgrp2o.model.layers import Conv2d, Residual


def test_default_backbone_config():
    config = BackboneConfig()

    assert (config.input_size, config.feature_size, config.channels) == (96, 24, 128)
    assert config.downsamplings == 2


@pytest.mark.parametrize(
    'settings',
    [
        {'input_size': 96, 'feature_size': 20},
        {'input_size': 96, 'feature_size': 32},
        {'feature_size': 24, 'depth': 4},
        {'channels': 7},
        {'stages': 0},
        {'depth': -1},
    ],
)
def test_invalid_backbone_config(settings):
    with pytest.raises(ValidationError):
        BackboneConfig(**settings)


def test_odd_channels_allowed_for_basic_blocks():
    config = BackboneConfig(channels=7, residual_block=ResidualLayout.BASIC)

    assert config.channels == 7


def test_conv_parameter_names(wide_params):
    conv = Conv2d(wide_params, 'block/conv', 3, 5, kernel_size=3)

    assert wide_params.names() == ('block/conv/kernel', 'block/conv/bias')
    assert conv.kernel.shape == (3, 3, 3, 5)
    assert not wide_params['block/conv/bias'].decay
    assert wide_params['block/conv/kernel'].decay


@pytest.mark.parametrize('layout, expected', [(ResidualLayout.BOTTLENECK, 256), (ResidualLayout.BASIC, 1200)])
def test_residual_parameter_count(wide_params, layout, expected):
    Residual(wide_params, 'res', 8, layout)

    assert wide_params.count() == expected


def test_residual_rejects_channel_mismatch(wide_params):
    block = Residual(wide_params, 'res', 8, ResidualLayout.BOTTLENECK)

    with pytest.raises(ShapeError):
        block.forward(np.zeros((1, 4, 4, 6)))


def test_residual_backward_matches_numeric_gradient(wide_params, rng, numeric_gradient):
    block = Residual(wide_params, 'res', 4, ResidualLayout.BOTTLENECK)
    x = rng.standard_normal((2, 4, 4, 4))
    g = rng.standard_normal((2, 4, 4, 4))

    y, cache = block.forward(x)
    dx = block.backward(g, cache)
    expected = numeric_gradient(lambda: float((block.forward(x)[0] * g).sum()), x)

    assert y.shape == x.shape
    np.testing.assert_allclose(dx, expected, rtol=1e-5, atol=1e-7)


def test_stem_output_shape(wide_params, backbone_config, depth_batch):
    stem = Stem(wide_params, 'stem', backbone_config)

    y, _ = stem.forward(depth_batch())

    assert y.shape == (2, 8, 8, 8)


def test_stem_rejects_wrong_input_size(wide_params, backbone_config):
    stem = Stem(wide_params, 'stem', backbone_config)

    with pytest.raises(ShapeError):
        stem.forward(np.zeros((1, 24, 24, 1)))


@pytest.mark.parametrize('pool', [PoolType.MAX, PoolType.AVG])
@pytest.mark.parametrize('depth', [0, 1, 2])
def test_hourglass_preserves_shape(wide_params, backbone_config, rng, pool, depth):
    backbone_config.pool = pool
    hourglass = Hourglass(wide_params, 'hg', 8, depth, backbone_config)
    x = rng.standard_normal((2, 8, 8, 8))

    y, _ = hourglass.forward(x)

    assert y.shape == x.shape


def test_hourglass_depth_zero_is_one_residual(wide_params, backbone_config):
    Hourglass(wide_params, 'hg', 8, 0, backbone_config)

    assert wide_params.count() == 256
    assert all(name.startswith('hg/res/') for name in wide_params.names())


def test_hourglass_rejects_indivisible_input(wide_params, backbone_config):
    hourglass = Hourglass(wide_params, 'hg', 8, 2, backbone_config)

    with pytest.raises(ShapeError):
        hourglass.forward(np.zeros((1, 6, 6, 8)))


def test_stage_backbone_backward_matches_numeric_gradient(wide_params, backbone_config, rng, numeric_gradient):
    backbone_config.channels = 4
    backbone = StageBackbone(wide_params, 'backbone', backbone_config)
    x = rng.standard_normal((1, 4, 4, 4))
    g = rng.standard_normal((1, 4, 4, 4))

    _, cache = backbone.forward(x)
    dx = backbone.backward(g, cache)
    expected = numeric_gradient(lambda: float((backbone.forward(x)[0] * g).sum()), x)

    np.testing.assert_allclose(dx, expected, rtol=1e-5, atol=1e-7)


def test_stage_input_adds_remapped_features(wide_params, rng):
    stage_input = StageInput(wide_params, 'input', 4)
    stem = rng.standard_normal((1, 4, 4, 4))
    zeros = np.zeros_like(stem)

    y, _ = stage_input.forward_pair(stem, zeros)

    np.testing.assert_allclose(y, stem)


def test_stage_input_rejects_mismatched_shapes(wide_params):
    stage_input = StageInput(wide_params, 'input', 4)

    with pytest.raises(ShapeError):
        stage_input.forward_pair(np.zeros((1, 4, 4, 4)), np.zeros((1, 2, 2, 4)))


def test_train_mode_updates_running_statistics(wide_params, backbone_config, depth_batch):
    stem = Stem(wide_params, 'stem', backbone_config)
    before = wide_params['stem/bn/running_mean'].value.copy()

    stem.forward(depth_batch(), Mode.TRAIN)

    assert not np.allclose(wide_params['stem/bn/running_mean'].value, before)
