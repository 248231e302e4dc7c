import numpy as np
import pytest
from pydantic import ValidationError

from jgrp2o.common_types import Precision
from jgrp2o.exceptions import OptimizerStateError
from jgrp2o.numerics.params import ParamStore
from jgrp2o.training.optimizer import adam_step, AdamState, TrainConfig
from tests.training.factories import TrainConfigFactory


def test_zero_gradient_leaves_params(small_store, train_config):
    before = small_store.state_dict()
    adam_step(small_store, AdamState(small_store), train_config)

    for name, value in small_store.state_dict().items():
        assert np.array_equal(value, before[name])


def test_first_step_is_normalized_gradient(small_store, train_config, rng):
    kernel = small_store['layer/kernel']
    before = kernel.value.copy()
    g = rng.standard_normal(kernel.shape)
    kernel.grad[...] = g

    adam_step(small_store, AdamState(small_store), train_config)

    expected = before - train_config.learning_rate * g / (np.abs(g) + train_config.epsilon)
    assert np.allclose(kernel.value, expected, rtol=1e-6, atol=1e-9)


def test_explicit_learning_rate_overrides_config(small_store, train_config):
    kernel = small_store['layer/kernel']
    before = kernel.value.copy()
    kernel.grad.fill(1.0)

    adam_step(small_store, AdamState(small_store), train_config, lr=0.5)

    assert np.allclose(kernel.value, before - 0.5, atol=1e-6)


def test_decoupled_weight_decay(small_store):
    config = TrainConfigFactory(weight_decay=0.1)
    kernel_before = small_store['layer/kernel'].value.copy()

    adam_step(small_store, AdamState(small_store), config)

    assert np.allclose(small_store['layer/kernel'].value, kernel_before * (1 - 0.01 * 0.1))
    assert np.array_equal(small_store['layer/bias'].value, np.full(3, 0.5))
    assert np.array_equal(small_store['layer/running_mean'].value, np.zeros(3))


def test_buffers_have_no_moments(small_store):
    state = AdamState(small_store)

    assert set(state.m) == {'layer/kernel', 'layer/bias'}
    assert set(state.state_dict()) == {
        'adam/m/layer/kernel',
        'adam/m/layer/bias',
        'adam/v/layer/kernel',
        'adam/v/layer/bias',
    }


def test_minimizes_quadratic():
    store = ParamStore(Precision.WIDE, seed=3)
    w = store.add('w', (5,), 'he_normal')
    state = AdamState(store)
    config = TrainConfigFactory(learning_rate=0.05)

    for _ in range(1000):
        store.zero_grad()
        w.grad[...] = 2 * (w.value - 3.0)
        adam_step(store, state, config)

    assert state.step == 1000
    assert np.allclose(w.value, 3.0, atol=0.1)


def test_steps_are_deterministic(train_config, rng):
    grads = rng.standard_normal((4, 2, 3))

    def run() -> np.ndarray:
        store = ParamStore(Precision.WIDE, seed=5)
        store.add('layer/kernel', (2, 3), 'he_normal')
        state = AdamState(store)
        for g in grads:
            store['layer/kernel'].grad[...] = g
            adam_step(store, state, train_config)
        return store['layer/kernel'].value

    assert np.array_equal(run(), run())


def test_state_dict_round_trip(small_store, train_config):
    small_store['layer/kernel'].grad.fill(0.3)
    state = AdamState(small_store)
    adam_step(small_store, state, train_config)

    restored = AdamState(small_store)
    restored.load_state_dict(state.state_dict(), state.step)

    assert restored.step == 1
    for name in state.m:
        assert np.array_equal(restored.m[name], state.m[name])
        assert np.array_equal(restored.v[name], state.v[name])


def test_load_state_dict_missing_entry(small_store):
    state = AdamState(small_store)
    saved = state.state_dict()
    del saved['adam/v/layer/bias']

    with pytest.raises(OptimizerStateError):
        state.load_state_dict(saved, 1)


def test_load_state_dict_wrong_shape(small_store):
    state = AdamState(small_store)
    saved = state.state_dict()
    saved['adam/m/layer/kernel'] = np.zeros((3, 2))

    with pytest.raises(OptimizerStateError):
        state.load_state_dict(saved, 1)


def test_state_of_other_store(small_store, train_config):
    other = ParamStore(Precision.WIDE)
    other.add('layer/bias', (3,))

    with pytest.raises(OptimizerStateError):
        adam_step(small_store, AdamState(other), train_config)


def test_learning_rate_schedule():
    config = TrainConfig(learning_rate=1e-4, lr_decay=0.96)

    assert config.learning_rate_at(0) == 1e-4
    assert config.learning_rate_at(2) == pytest.approx(9.216e-5)


@pytest.mark.parametrize(
    'settings',
    [
        {'learning_rate': 0},
        {'lr_decay': 1.5},
        {'lr_decay': 0},
        {'weight_decay': -1e-5},
        {'beta1': 1.0},
        {'batch_size': 0},
        {'optimizer': 'sgd'},
    ],
)
def test_invalid_train_config(settings):
    with pytest.raises(ValidationError):
        TrainConfig(**settings)
