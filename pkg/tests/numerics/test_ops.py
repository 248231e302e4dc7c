import numpy as np
import pytest

from jgrp2o.common_types import Mode
from jgrp2o.exceptions import ShapeError
from jgrp2o.numerics import ops


def test_conv2d_identity_kernel(rng):
    x = rng.standard_normal((2, 3, 3, 4))
    kernel = np.eye(4)[None, None]

    y, _ = ops.conv2d(x, kernel, np.zeros(4))

    np.testing.assert_array_equal(y, x)


def test_conv2d_constant_input_all_ones_kernel():
    x = np.full((1, 5, 5, 1), 2.0)

    y, _ = ops.conv2d(x, np.ones((3, 3, 1, 1)), padding='valid')

    assert y.shape == (1, 3, 3, 1)
    np.testing.assert_allclose(y, 18.0)


def test_conv2d_zero_kernel(rng):
    x = rng.standard_normal((1, 4, 4, 3))

    y, _ = ops.conv2d(x, np.zeros((3, 3, 3, 2)), np.zeros(2))

    assert not y.any()


@pytest.mark.parametrize('size, stride, expected', [(5, 1, 5), (5, 2, 3), (8, 2, 4)])
def test_conv2d_same_padding_shape(rng, size, stride, expected):
    y, _ = ops.conv2d(rng.standard_normal((1, size, size, 1)), rng.standard_normal((3, 3, 1, 2)), stride=stride)

    assert y.shape == (1, expected, expected, 2)


def test_conv2d_channel_mismatch(rng):
    with pytest.raises(ShapeError) as e:
        ops.conv2d(rng.standard_normal((1, 4, 4, 3)), rng.standard_normal((1, 1, 2, 2)))

    assert 'channels' in str(e.value)


def test_conv2d_zero_sized_output(rng):
    with pytest.raises(ShapeError):
        ops.conv2d(rng.standard_normal((1, 2, 2, 1)), rng.standard_normal((3, 3, 1, 1)), padding='valid')


@pytest.mark.parametrize(
    'kernel_size, stride, padding', [(1, 1, 'same'), (3, 1, 'same'), (3, 2, 'same'), (2, 1, 'valid')]
)
def test_conv2d_backward_matches_finite_differences(rng, numeric_gradient, kernel_size, stride, padding):
    x = rng.standard_normal((2, 5, 5, 2))
    kernel = rng.standard_normal((kernel_size, kernel_size, 2, 3))
    bias = rng.standard_normal(3)
    y, cache = ops.conv2d(x, kernel, bias, stride, padding)
    g = rng.standard_normal(y.shape)

    def loss() -> float:
        return float((ops.conv2d(x, kernel, bias, stride, padding)[0] * g).sum())

    dx, dkernel, dbias = ops.conv2d_backward(g, cache)

    np.testing.assert_allclose(dx, numeric_gradient(loss, x), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(dkernel, numeric_gradient(loss, kernel), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(dbias, numeric_gradient(loss, bias), rtol=1e-6, atol=1e-8)


def test_spatial_softmax_uniform():
    y = ops.spatial_softmax(np.zeros((1, 2, 2, 1)))

    np.testing.assert_allclose(y, 0.25)


def test_spatial_softmax_known_values():
    logits = np.array([0.0, np.log(3.0), 0.0, 0.0]).reshape(1, 2, 2, 1)

    y = ops.spatial_softmax(logits)

    np.testing.assert_allclose(y.reshape(-1), [1 / 6, 1 / 2, 1 / 6, 1 / 6], rtol=1e-12)


def test_spatial_softmax_saturation():
    logits = np.array([100.0, 0.0, 0.0, 0.0]).reshape(1, 2, 2, 1)

    y = ops.spatial_softmax(logits).reshape(-1)

    assert y[0] >= 1 - 3e-43
    assert np.all(y[1:] <= np.exp(-43.0))


def test_spatial_softmax_normalised_and_shift_invariant(rng):
    logits = rng.standard_normal((3, 4, 5, 2)) * 5

    y = ops.spatial_softmax(logits)
    shifted = ops.spatial_softmax(logits + rng.standard_normal((3, 1, 1, 2)) * 10)

    np.testing.assert_allclose(y.sum(axis=(1, 2)), 1.0, atol=1e-6)
    assert np.all(y > 0)
    assert np.max(np.abs(y - shifted)) <= 1e-6


def test_spatial_softmax_backward(rng, numeric_gradient):
    logits = rng.standard_normal((2, 3, 3, 2))
    g = rng.standard_normal(logits.shape)
    y = ops.spatial_softmax(logits)

    expected = numeric_gradient(lambda: float((ops.spatial_softmax(logits) * g).sum()), logits)

    np.testing.assert_allclose(ops.spatial_softmax_backward(g, y), expected, rtol=1e-6, atol=1e-9)


def test_row_softmax_backward(rng, numeric_gradient):
    scores = rng.standard_normal((2, 3, 3))
    g = rng.standard_normal(scores.shape)
    y = ops.row_softmax(scores)

    expected = numeric_gradient(lambda: float((ops.row_softmax(scores) * g).sum()), scores)

    np.testing.assert_allclose(y.sum(axis=-1), 1.0)
    np.testing.assert_allclose(ops.row_softmax_backward(g, y), expected, rtol=1e-6, atol=1e-9)


def test_matmul_examples(rng):
    a = rng.standard_normal((3, 2))

    assert np.array_equal(ops.matmul(a, np.eye(2))[0], a)
    assert not ops.matmul(a, np.zeros((2, 4)))[0].any()
    product, _ = ops.matmul(np.array([[1, 2], [3, 4]]), np.array([[0, 1], [1, 0]]))
    np.testing.assert_array_equal(product, [[2, 1], [4, 3]])


def test_matmul_inner_dimension_mismatch():
    with pytest.raises(ShapeError):
        ops.matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_matmul_backward_reduces_broadcast_factor(rng, numeric_gradient):
    a = rng.standard_normal((2, 3, 4))
    b = rng.standard_normal((4, 5))
    g = rng.standard_normal((2, 3, 5))
    _, cache = ops.matmul(a, b)

    da, db = ops.matmul_backward(g, cache)

    np.testing.assert_allclose(da, numeric_gradient(lambda: float(((a @ b) * g).sum()), a), rtol=1e-6)
    np.testing.assert_allclose(db, numeric_gradient(lambda: float(((a @ b) * g).sum()), b), rtol=1e-6)


def test_relu():
    np.testing.assert_array_equal(ops.relu(np.array([-1.0, 0.0, 2.5])), [0.0, 0.0, 2.5])
    np.testing.assert_array_equal(ops.relu(-np.ones(3)), np.zeros(3))
    np.testing.assert_array_equal(ops.relu_backward(np.ones(3), np.array([-1.0, 0.0, 2.5])), [0.0, 0.0, 1.0])


def test_avg_pool2():
    block = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 2, 2, 1)

    assert ops.avg_pool2(block).item() == 2.5
    np.testing.assert_array_equal(ops.avg_pool2(np.full((1, 4, 4, 2), 3.0)), np.full((1, 2, 2, 2), 3.0))


def test_avg_pool2_odd_dims():
    with pytest.raises(ShapeError):
        ops.avg_pool2(np.zeros((1, 3, 4, 1)))


def test_avg_pool_then_upsample_preserves_mean(rng):
    x = rng.standard_normal((2, 4, 6, 3))

    y = ops.upsample2(ops.avg_pool2(x))

    np.testing.assert_allclose(y.mean(axis=(1, 2)), x.mean(axis=(1, 2)), atol=1e-12)


def test_upsample2():
    x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 2, 2, 1)

    y = ops.upsample2(x)[0, :, :, 0]

    np.testing.assert_array_equal(y, [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]])
    np.testing.assert_array_equal(ops.upsample2(np.full((1, 1, 1, 1), 7.0)), np.full((1, 2, 2, 1), 7.0))


def test_max_pool2_routes_gradient_to_maximum():
    x = np.array([1.0, 5.0, 3.0, 4.0]).reshape(1, 2, 2, 1)

    y, mask = ops.max_pool2(x)
    dx = ops.max_pool2_backward(np.ones((1, 1, 1, 1)), mask)

    assert y.item() == 5.0
    np.testing.assert_array_equal(dx.reshape(-1), [0, 1, 0, 0])


def test_pool_and_upsample_backward(rng, numeric_gradient):
    x = rng.standard_normal((1, 4, 4, 2))
    g_pool = rng.standard_normal((1, 2, 2, 2))
    g_up = rng.standard_normal((1, 8, 8, 2))

    expected_pool = numeric_gradient(lambda: float((ops.avg_pool2(x) * g_pool).sum()), x)
    expected_up = numeric_gradient(lambda: float((ops.upsample2(x) * g_up).sum()), x)

    np.testing.assert_allclose(ops.avg_pool2_backward(g_pool), expected_pool, rtol=1e-6)
    np.testing.assert_allclose(ops.upsample2_backward(g_up), expected_up, rtol=1e-6)


def test_batch_norm_eval_identity(rng):
    x = rng.standard_normal((2, 3, 3, 2))

    y, _ = ops.batch_norm(x, np.ones(2), np.zeros(2), np.zeros(2), np.ones(2) - ops.BN_EPSILON, Mode.EVAL)

    np.testing.assert_allclose(y, x, rtol=1e-12)


def test_batch_norm_train_statistics(rng):
    x = rng.standard_normal((4, 5, 5, 3)) * 3 + 7

    y, cache = ops.batch_norm(x, np.ones(3), np.zeros(3), np.zeros(3), np.ones(3), Mode.TRAIN)

    np.testing.assert_allclose(y.mean(axis=(0, 1, 2)), 0.0, atol=1e-6)
    np.testing.assert_allclose(y.var(axis=(0, 1, 2)), 1.0, atol=1e-5)
    np.testing.assert_allclose(cache.running_mean, 0.1 * x.mean(axis=(0, 1, 2)))


def test_batch_norm_shift_only(rng):
    x = rng.standard_normal((2, 3, 3, 2))

    y, _ = ops.batch_norm(x, np.zeros(2), np.array([0.5, -2.0]), np.zeros(2), np.ones(2), Mode.TRAIN)

    np.testing.assert_array_equal(y[..., 0], 0.5)
    np.testing.assert_array_equal(y[..., 1], -2.0)


def test_batch_norm_channel_mismatch(rng):
    with pytest.raises(ShapeError):
        ops.batch_norm(rng.standard_normal((1, 2, 2, 3)), np.ones(2), np.zeros(2), np.zeros(2), np.ones(2))


@pytest.mark.parametrize('mode', [Mode.TRAIN, Mode.EVAL])
def test_batch_norm_backward(rng, numeric_gradient, mode):
    x = rng.standard_normal((2, 3, 3, 2))
    scale = rng.standard_normal(2)
    shift = rng.standard_normal(2)
    mean, var = rng.standard_normal(2), rng.uniform(0.5, 2.0, 2)
    g = rng.standard_normal(x.shape)
    _, cache = ops.batch_norm(x, scale, shift, mean, var, mode)

    def loss() -> float:
        return float((ops.batch_norm(x, scale, shift, mean, var, mode)[0] * g).sum())

    dx, dscale, dshift = ops.batch_norm_backward(g, cache)

    np.testing.assert_allclose(dx, numeric_gradient(loss, x), rtol=1e-5, atol=1e-8)
    np.testing.assert_allclose(dscale, numeric_gradient(loss, scale), rtol=1e-6)
    np.testing.assert_allclose(dshift, numeric_gradient(loss, shift), rtol=1e-6)


def test_primitives_are_pure(rng):
    x = rng.standard_normal((1, 4, 4, 2))
    kernel = rng.standard_normal((3, 3, 2, 2))

    np.testing.assert_array_equal(ops.conv2d(x, kernel)[0], ops.conv2d(x, kernel)[0])
    np.testing.assert_array_equal(ops.spatial_softmax(x), ops.spatial_softmax(x))
