"""Component study: train configuration variants on one split and compare their test error."""
import logging
from typing import Any, Dict, Optional, Sequence

import pandas as pd

from jgrp2o.config import resolve, RunConfig, set_key
from jgrp2o.data.dataset import HandDataset, load_dataset
from jgrp2o.evaluation.evaluator import evaluate
from jgrp2o.exceptions import ConfigError
from jgrp2o.model.network import JgrP2ONet
from jgrp2o.training.trainer import fit
from jgrp2o.utils.fs_handler import FSHandler, LocalFSHandler

log = logging.getLogger(__name__)

ABLATION_FILE = 'ablation.csv'

VARIANTS: Dict[str, Dict[str, Any]] = {
    'p2o': {'jgr.enabled': False, 'p2o.weighting': 'uniform', 'loss.beta': 0.0},
    'p2o+offset': {'jgr.enabled': False, 'p2o.weighting': 'uniform'},
    'full': {'jgr.graph': 'skeleton'},
    'similarity': {'jgr.graph': 'similarity'},
    'parameterized': {'jgr.graph': 'parameterized'},
}


def variant_config(config: RunConfig, variant: str) -> RunConfig:
    """``config`` with the settings of a named variant applied on top"""
    if variant not in VARIANTS:
        raise ConfigError(variant, f'unknown ablation variant; known: {", ".join(VARIANTS)}')
    settings = config.dict()
    for key, value in VARIANTS[variant].items():
        set_key(settings, key, value)
    return resolve(settings)


def run_ablation(
    config: RunConfig,
    variants: Sequence[str] = tuple(VARIANTS),
    train_set: Optional[HandDataset] = None,
    test_set: Optional[HandDataset] = None,
    out_dir: Optional[str] = None,
    fs: FSHandler = LocalFSHandler(),
) -> pd.DataFrame:
    """Train every variant with the same seed and data, then evaluate it

    Args:
        config: base configuration
        variants: names from ``VARIANTS``
        train_set: shared training split, loaded from ``config.data`` when omitted
        test_set: shared evaluation split, loaded from ``config.data`` when omitted
        out_dir: folder receiving ``ablation.csv``
        fs: file system access

    Returns:
        table with columns variant, params, mean_error_mm
    """
    configs = {name: variant_config(config, name) for name in variants}
    data = config.data
    crop = config.backbone.input_size
    if train_set is None:
        train_set = load_dataset(
            data.root, data.format, config.model.joints, crop, data.split, data, config.train.seed, fs
        )
    if test_set is None:
        test_set = load_dataset(
            data.root, data.format, config.model.joints, crop, data.test_split, data, config.train.seed, fs
        )

    rows = []
    for name, variant in configs.items():
        log.info('Training ablation variant %s', name)
        net = JgrP2ONet.from_config(variant)
        fit(net, train_set, variant)
        report = evaluate(net, test_set, variant.eval)
        rows.append({'variant': name, 'params': net.count_params(), 'mean_error_mm': report.mean_error_mm})
        log.info('Variant %s: %s', name, report)

    table = pd.DataFrame(rows, columns=['variant', 'params', 'mean_error_mm'])
    if out_dir is not None:
        fs.write(fs.join_path(out_dir, ABLATION_FILE), table.to_csv(index=False, lineterminator='\n'))
    return table
