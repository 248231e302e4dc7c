import numpy as np
import pytest
from pytest_factoryboy import register

from jgrp2o.common_types import Precision
from jgrp2o.model.network import JgrP2ONet
from jgrp2o.model.topology import Topology
from jgrp2o.numerics.params import ParamStore
from tests.model.factories import BackboneConfigFactory, JgrConfigFactory, ModelConfigFactory, P2OConfigFactory


register(BackboneConfigFactory)
register(JgrConfigFactory)
register(ModelConfigFactory)
register(P2OConfigFactory, 'p2o_config')


@pytest.fixture()
def wide_params():
    return ParamStore(Precision.WIDE, seed=7)


@pytest.fixture()
def chain4():
    return Topology.load('chain4')


@pytest.fixture()
def tiny_net(model_config, backbone_config, jgr_config, p2o_config):
    return JgrP2ONet(model_config, backbone_config, jgr_config, p2o_config, seed=3)


@pytest.fixture()
def depth_batch(rng):
    """Two 32x32 normalised depth frames with a far-plane border"""

    def _f(size: int = 32, batch: int = 2) -> np.ndarray:
        x = np.ones((batch, size, size, 1))
        x[:, 4:-4, 4:-4, 0] = rng.uniform(-0.8, 0.8, size=(batch, size - 8, size - 8))
        return x

    return _f
