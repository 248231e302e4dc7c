from jgrp2o.data.camera import CameraIntrinsics, uvz_to_xyz, xyz_to_uvz  # noqa
from jgrp2o.data.frame import crop_and_normalize, CropTransform, DepthFrame, hand_center, Sample  # noqa
from jgrp2o.data.augment import augment, AugmentConfig, apply_transform, Transform  # noqa
from jgrp2o.data.synth import HandModel, PoseSampler, render_depth, synth_generate, synth_raw  # noqa
from jgrp2o.data.dataset import (  # noqa
    DataConfig,
    HandDataset,
    IcvlDataset,
    load_dataset,
    NativeDataset,
    SyntheticDataset,
    write_native_dataset,
)
from jgrp2o.data.loader import Batch, BatchLoader, make_batch, worker_count  # noqa
