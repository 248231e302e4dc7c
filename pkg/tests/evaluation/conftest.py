import numpy as np
import pytest
from pytest_factoryboy import register

from jgrp2o.data.dataset import SyntheticDataset
from jgrp2o.model.network import JgrP2ONet
from tests.evaluation.factories import EvalConfigFactory, EvalReportFactory


register(EvalConfigFactory)
register(EvalReportFactory)


@pytest.fixture()
def origin_poses():
    return np.zeros((2, 2, 3))


@pytest.fixture()
def tiny_net(tiny_n4_config):
    return JgrP2ONet.from_config(tiny_n4_config)


@pytest.fixture()
def test_split(tiny_n4_config):
    return SyntheticDataset(5, 4, 0, 'test', tiny_n4_config.data, tiny_n4_config.backbone.input_size)
