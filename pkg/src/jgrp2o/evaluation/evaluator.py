import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, NamedTuple, Optional

import numpy as np
import pandas as pd

from jgrp2o.data.camera import uvz_to_xyz
from jgrp2o.data.dataset import HandDataset
from jgrp2o.data.loader import make_batch, worker_count
from jgrp2o.evaluation.metrics import EvalConfig, EvalReport
from jgrp2o.exceptions import InputValidationError
from jgrp2o.model.network import JgrP2ONet

log = logging.getLogger(__name__)

# predicted depths are clamped to this before back-projection
MIN_PREDICTED_DEPTH_MM = 1.0


class Predictions(NamedTuple):
    """Per-frame poses: normalised crop units, original image (u, v px, z mm) and camera space mm."""

    normalized: np.ndarray
    image: np.ndarray
    world: np.ndarray
    ground_truth: np.ndarray


def predict_dataset(
    net: JgrP2ONet, dataset: HandDataset, batch_size: int = 32, oracle: bool = False
) -> Predictions:
    """Eval-mode inference over a dataset, no augmentation

    Args:
        net: model
        dataset: frames to predict
        batch_size: frames per forward pass
        oracle: use the ground-truth normalised pose as the prediction

    Returns:
        Predictions in dataset order
    """
    if dataset.joints != net.joints:
        log.error('Dataset has %s joints, model %s', dataset.joints, net.joints)
        raise InputValidationError('joint count', expected=net.joints, actual=dataset.joints, detail='dataset')

    chunks = [list(range(i, min(i + batch_size, len(dataset)))) for i in range(0, len(dataset), batch_size)]

    def run(indices: List[int]) -> np.ndarray:
        batch = make_batch([dataset[i] for i in indices], np.asarray(indices), net.dtype)
        if oracle:
            return batch.pose.astype(np.float64)
        return net.predict(batch.x, net.make_grid(batch.x, batch.mask)).astype(np.float64)

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        normalized_chunks = list(pool.map(run, chunks))

    n = net.joints
    normalized = np.concatenate(normalized_chunks) if normalized_chunks else np.zeros((0, n, 3))
    image = np.zeros_like(normalized)
    world = np.zeros_like(normalized)
    ground_truth = np.zeros_like(normalized)
    for index in range(len(dataset)):
        sample = dataset[index]
        image[index] = sample.frame.crop.to_original(normalized[index])
        if oracle:
            world[index] = sample.pose_world
        else:
            shallow = image[index, :, 2] < MIN_PREDICTED_DEPTH_MM
            if np.any(shallow):
                log.warning('Frame %s: clamping %s depths to %s mm', index, int(shallow.sum()), MIN_PREDICTED_DEPTH_MM)
                image[index, shallow, 2] = MIN_PREDICTED_DEPTH_MM
            world[index] = uvz_to_xyz(image[index], sample.frame.intrinsics)
        ground_truth[index] = sample.pose_world
    log.info('Predicted %s frames', len(normalized))
    return Predictions(normalized, image, world, ground_truth)


def evaluate(
    net: JgrP2ONet, dataset: HandDataset, config: EvalConfig = EvalConfig(), oracle: bool = False
) -> EvalReport:
    """Mean 3D error and success-frame curve of a model on a dataset split

    Args:
        net: model, evaluated with running batch-norm statistics
        dataset: evaluation split
        config: threshold grid and batch size
        oracle: evaluate ground-truth poses instead of model predictions

    Returns:
        EvalReport
    """
    predictions = predict_dataset(net, dataset, config.batch_size, oracle)
    report = EvalReport.build(predictions.world, predictions.ground_truth, config.thresholds)
    log.info('Evaluation finished: %s', report)
    return report


def inference_table(predictions: Predictions, frame_ids: Optional[List[int]] = None) -> pd.DataFrame:
    """Rows ``frame, joint, u, v, z, x_mm, y_mm, z_mm``; u, v in original pixels and z in mm"""
    frames, joints, _ = predictions.image.shape
    frame_ids = frame_ids if frame_ids is not None else list(range(frames))
    return pd.DataFrame(
        {
            'frame': np.repeat(frame_ids, joints),
            'joint': np.tile(np.arange(joints), frames),
            'u': predictions.image[..., 0].reshape(-1),
            'v': predictions.image[..., 1].reshape(-1),
            'z': predictions.image[..., 2].reshape(-1),
            'x_mm': predictions.world[..., 0].reshape(-1),
            'y_mm': predictions.world[..., 1].reshape(-1),
            'z_mm': predictions.world[..., 2].reshape(-1),
        }
    )
