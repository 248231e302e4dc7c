import numpy as np
import pytest
from pytest_factoryboy import register

from jgrp2o.common_types import Precision
from jgrp2o.data.dataset import SyntheticDataset
from jgrp2o.numerics.params import ParamStore
from tests.training.factories import CheckpointFactory, TrainConfigFactory


register(TrainConfigFactory)
register(CheckpointFactory)


@pytest.fixture()
def small_store():
    store = ParamStore(Precision.WIDE, seed=11)
    store.add('layer/kernel', (2, 3), 'he_normal')
    store.add('layer/bias', (3,), 0.5, decay=False)
    store.add('layer/running_mean', (3,), trainable=False)
    return store


@pytest.fixture()
def arrays(rng):
    return {
        'a/kernel': rng.standard_normal((3, 3, 1, 2)).astype(np.float32),
        'a/bias': np.zeros(2, dtype=np.float32),
        'b/count': np.arange(4, dtype=np.int64),
        'scalar': np.array(2.5),
    }


@pytest.fixture()
def train_dataset():
    def _f(config, count: int = 4, split: str = 'train') -> SyntheticDataset:
        return SyntheticDataset(
            count, config.model.joints, config.train.seed, split, config.data, config.backbone.input_size
        )

    return _f
