import os

import numpy as np
import pytest

from jgrp2o.config import load_config, RunConfig

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), 'configs')


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow training and gradient checks')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture()
def config_path():
    def _f(name: str) -> str:
        return os.path.join(CONFIG_DIR, name)

    return _f


@pytest.fixture()
def tiny_config(config_path) -> RunConfig:
    return load_config(config_path('tiny.toml'))


@pytest.fixture()
def tiny_n4_config(config_path) -> RunConfig:
    return load_config(config_path('tiny_n4.toml'))


@pytest.fixture()
def tiny_single_stage_config(config_path) -> RunConfig:
    return load_config(config_path('tiny_n4.toml'), ['backbone.stages=1', 'loss.stages=1'])


@pytest.fixture()
def numeric_gradient():
    """Central differences of a zero-argument scalar function w.r.t. an array it reads, perturbed in place"""

    def _f(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
        grad = np.zeros_like(x)
        flat = x.reshape(-1)
        out = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = f()
            flat[i] = original - h
            minus = f()
            flat[i] = original
            out[i] = (plus - minus) / (2 * h)
        return grad

    return _f
