import numpy as np
import pytest

from jgrp2o.common_types import Precision
from jgrp2o.exceptions import InputValidationError, ShapeError
from jgrp2o.numerics.params import ParamStore


def test_add_and_count():
    store = ParamStore(Precision.WIDE)
    store.add('layer/kernel', (3, 3, 2, 4), 'he_normal')
    store.add('layer/bias', (4,))
    store.add('layer/running_mean', (4,), trainable=False)

    assert store.names() == ('layer/kernel', 'layer/bias', 'layer/running_mean')
    assert store.count() == 3 * 3 * 2 * 4 + 4
    assert store.count(trainable_only=False) == 3 * 3 * 2 * 4 + 8
    assert store.count(prefix='layer/bias') == 4
    assert store['layer/kernel'].value.dtype == np.float64
    assert store['layer/kernel'].grad.shape == (3, 3, 2, 4)


def test_standard_precision_is_float32():
    store = ParamStore()

    parameter = store.add('w', (2, 2), 'ones')

    assert parameter.value.dtype == np.float32
    assert parameter.grad.dtype == np.float32


def test_duplicate_name_rejected():
    store = ParamStore()
    store.add('w', (2,))

    with pytest.raises(InputValidationError):
        store.add('w', (2,))


def test_buffers_do_not_decay():
    store = ParamStore()

    buffer = store.add('bn/running_var', (2,), 'ones', trainable=False)

    assert not buffer.decay
    assert list(store.trainable()) == []


def test_initialisation_is_seeded():
    first = ParamStore(seed=3).add('w', (4, 4), 'he_normal').value
    second = ParamStore(seed=3).add('w', (4, 4), 'he_normal').value
    other = ParamStore(seed=4).add('w', (4, 4), 'he_normal').value

    np.testing.assert_array_equal(first, second)
    assert not np.array_equal(first, other)


def test_explicit_initial_value_shape_checked():
    with pytest.raises(ShapeError):
        ParamStore().add('w', (2, 2), np.zeros((3,)))


def test_zero_grad():
    store = ParamStore()
    parameter = store.add('w', (2,))
    parameter.grad += 5

    store.zero_grad()

    assert not parameter.grad.any()


def test_state_dict_round_trip(rng):
    source = ParamStore(Precision.WIDE)
    source.add('a', (2, 3), rng.standard_normal((2, 3)))
    source.add('b', (1,), 2.5, trainable=False)
    target = ParamStore(Precision.WIDE)
    target.add('a', (2, 3))
    target.add('b', (1,), trainable=False)

    target.load_state_dict(source.state_dict())

    for name in source.names():
        np.testing.assert_array_equal(target[name].value, source[name].value)


def test_load_state_dict_rejects_missing_entries():
    store = ParamStore()
    store.add('a', (2,))

    with pytest.raises(InputValidationError) as e:
        store.load_state_dict({'b': np.zeros(2)})

    assert 'missing' in str(e.value)


def test_load_state_dict_rejects_shape_mismatch():
    store = ParamStore()
    store.add('a', (2,))

    with pytest.raises(ShapeError):
        store.load_state_dict({'a': np.zeros(3)})
