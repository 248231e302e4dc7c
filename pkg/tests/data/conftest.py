import json
from typing import Optional

import numpy as np
import pytest
from pytest_factoryboy import register

from jgrp2o.data.dataset import encode_depth_png
from jgrp2o.utils.fs_handler import LocalFSHandler
from tests.data.factories import AugmentConfigFactory, CameraIntrinsicsFactory, DataConfigFactory


register(CameraIntrinsicsFactory)
register(DataConfigFactory)
register(AugmentConfigFactory)

FIXTURE_POSES = np.array(
    [
        [[0.0, 0.0, 500.0], [10.0, 0.0, 500.0], [0.0, 10.0, 505.0], [10.0, 10.0, 510.0]],
        [[5.0, -5.0, 480.0], [15.0, -5.0, 480.0], [5.0, 5.0, 490.0], [15.0, 5.0, 495.0]],
        [[-8.0, 3.0, 520.0], [2.0, 3.0, 515.0], [-8.0, 13.0, 525.0], [2.0, 13.0, 530.0]],
    ]
)


@pytest.fixture()
def fixture_poses():
    return FIXTURE_POSES.copy()


@pytest.fixture()
def native_root(tmp_path):
    """Hand-written three-frame native dataset of four joints over flat depth images"""

    def _f(labels: Optional[str] = None, joints: int = 4) -> str:
        fs = LocalFSHandler()
        folder = tmp_path / 'train'
        meta = {'fx': 120.0, 'fy': 120.0, 'cx': 48.0, 'cy': 48.0, 'joints': joints, 'cube': 250.0, 'count': 3}
        fs.write(str(folder / 'meta.json'), json.dumps(meta))
        for index in range(3):
            fs.write(str(folder / 'depth' / f'{index:06d}.png'), encode_depth_png(np.full((96, 96), 500.0)))
        if labels is None:
            rows = [
                ','.join([str(index)] + [repr(x) for x in pose.reshape(-1)]) for index, pose in enumerate(FIXTURE_POSES)
            ]
            labels = '\n'.join(rows) + '\n'
        fs.write(str(folder / 'labels.csv'), labels)
        return str(tmp_path)

    return _f
