import factory

from jgrp2o.common_types import DatasetFormat
from jgrp2o.data.augment import AugmentConfig
from jgrp2o.data.camera import CameraIntrinsics
from jgrp2o.data.dataset import DataConfig


class CameraIntrinsicsFactory(factory.Factory):
    class Meta:
        model = CameraIntrinsics

    fx = 120.0
    fy = 120.0
    cx = 48.0
    cy = 48.0


class DataConfigFactory(factory.Factory):
    class Meta:
        model = DataConfig

    format = DatasetFormat.SYNTH
    count = 8
    test_count = 4
    cube = 250.0
    image_size = 96


class AugmentConfigFactory(factory.Factory):
    class Meta:
        model = AugmentConfig

    enabled = True
    rotation = 180.0
    scale_min = 0.9
    scale_max = 1.1
    translation = 10.0
