"""Training loop with intermediate supervision, per-epoch logging and resumable checkpoints."""
import json
import logging
from typing import Callable, Dict, List, Optional, Sequence, TYPE_CHECKING

import numpy as np
import pandas as pd

from jgrp2o.common_types import Mode
from jgrp2o.data.dataset import HandDataset
from jgrp2o.data.loader import Batch, BatchLoader
from jgrp2o.evaluation.evaluator import evaluate
from jgrp2o.exceptions import DataError
from jgrp2o.model.network import JgrP2ONet
from jgrp2o.model.p2o import compute_offset_targets
from jgrp2o.numerics.gradcheck import Objective
from jgrp2o.numerics.params import ParamStore
from jgrp2o.objective import check_finite, LossConfig, LossReport, total_loss, total_loss_backward
from jgrp2o.training.checkpoint import Checkpoint, save_checkpoint
from jgrp2o.training.optimizer import adam_step, AdamState
from jgrp2o.utils.fs_handler import FSHandler, LocalFSHandler

if TYPE_CHECKING:
    from jgrp2o.config import RunConfig

log = logging.getLogger(__name__)

CHECKPOINT_FILE = 'checkpoint.bin'
LOG_FILE = 'train_log.csv'

Callback = Callable[[Dict[str, float]], None]


class Trainer:
    """Owns the parameters and optimizer state of one run; single writer."""

    def __init__(
        self,
        net: JgrP2ONet,
        config: 'RunConfig',
        dataset: HandDataset,
        test_set: Optional[HandDataset] = None,
        out_dir: Optional[str] = None,
        callbacks: Sequence[Callback] = (),
        fs: FSHandler = LocalFSHandler(),
    ):
        """
        Args:
            net: model to train in place
            config: resolved run configuration
            dataset: training split
            test_set: split evaluated after each epoch when ``train.validate_each_epoch`` is set
            out_dir: folder for checkpoints and the training log; nothing is written when None
            callbacks: called with a copy of every epoch log row
            fs: file system access
        """
        if len(dataset) == 0:
            log.error('Training set is empty')
            raise DataError('cannot train on an empty dataset')
        self.net = net
        self.config = config
        self.train_config = config.train
        self.dataset = dataset
        self.test_set = test_set
        self.out_dir = out_dir
        self.callbacks = list(callbacks)
        self.fs = fs
        self.loader = BatchLoader(
            dataset,
            config.train.batch_size,
            seed=config.train.seed,
            augment_config=config.augment,
            dtype=net.dtype,
        )
        self.state = AdamState(net.params)
        self.rng = np.random.default_rng(config.train.seed)
        self.epoch_start_state = self.rng.bit_generator.state
        self.epoch = 0
        self.epoch_step = 0
        self.global_step = 0
        self.epoch_sums: Dict[str, float] = {}
        self.history: List[Dict[str, float]] = []

    def __str__(self) -> str:
        return f'<Trainer epoch={self.epoch} step={self.global_step}>'

    def train_step(self, batch: Batch, lr: float) -> LossReport:
        """Forward, total loss, backward and one Adam update on a batch"""
        net = self.net
        net.params.zero_grad()
        grid = net.make_grid(batch.x, batch.mask)
        outputs, cache = net.forward(batch.x, grid, Mode.TRAIN)
        poses = [o.pose for o in outputs]
        offsets = [o.offsets for o in outputs]
        targets = compute_offset_targets(batch.pose, grid)

        report = total_loss(poses, offsets, batch.pose, targets, self.config.loss)
        check_finite(report, self.global_step + 1)
        dposes, doffsets = total_loss_backward(poses, offsets, batch.pose, targets, self.config.loss)
        net.backward(outputs, dposes, doffsets, cache)
        adam_step(net.params, self.state, self.train_config, lr)
        return report

    def _accumulate(self, report: LossReport, batch_size: int) -> None:
        for key, value in report.as_row().items():
            self.epoch_sums[key] = self.epoch_sums.get(key, 0.0) + value * batch_size
        self.epoch_sums['samples'] = self.epoch_sums.get('samples', 0.0) + batch_size

    def _epoch_row(self, lr: float) -> Dict[str, float]:
        samples = self.epoch_sums.pop('samples')
        row: Dict[str, float] = {'epoch': self.epoch + 1, 'step': self.global_step, 'lr': lr}
        row.update({key: value / samples for key, value in self.epoch_sums.items()})
        if self.train_config.validate_each_epoch and self.test_set is not None and len(self.test_set):
            row['val_mean_error_mm'] = evaluate(self.net, self.test_set, self.config.eval).mean_error_mm
        return row

    def fit(self, epochs: Optional[int] = None, max_steps: Optional[int] = None) -> pd.DataFrame:
        """Train until ``epochs`` total epochs are complete

        Args:
            epochs: total epoch count, defaults to ``train.epochs``
            max_steps: stop (after checkpointing) once this many global steps ran

        Returns:
            training log, one row per completed epoch
        """
        epochs = self.train_config.epochs if epochs is None else epochs
        every = self.train_config.checkpoint_every
        while self.epoch < epochs:
            lr = self.train_config.learning_rate_at(self.epoch)
            self.rng.bit_generator.state = self.epoch_start_state
            order = self.rng.permutation(len(self.dataset))
            for batch in self.loader.batches(self.epoch, self.epoch_step, order):
                report = self.train_step(batch, lr)
                self.global_step += 1
                self.epoch_step += 1
                self._accumulate(report, batch.size)
                log.debug('Step %s: %s', self.global_step, report)

                stop = max_steps is not None and self.global_step >= max_steps
                if (every and self.global_step % every == 0) or stop:
                    self.save()
                if stop:
                    log.info('Stopping after %s steps', self.global_step)
                    return self.log_table()

            row = self._epoch_row(lr)
            self.history.append(row)
            self.epoch += 1
            self.epoch_step = 0
            self.epoch_sums = {}
            self.epoch_start_state = self.rng.bit_generator.state
            log.info('Epoch %s finished: total loss %.6f, lr %.3e', self.epoch, row['total'], lr)
            self.save()
            self.write_log()
            for callback in self.callbacks:
                callback(dict(row))
        return self.log_table()

    def log_table(self) -> pd.DataFrame:
        table = pd.DataFrame(self.history)
        if len(table):
            table = table.astype({'epoch': int, 'step': int})
        return table

    def write_log(self) -> None:
        if self.out_dir is None:
            return
        self.fs.write(
            self.fs.join_path(self.out_dir, LOG_FILE), self.log_table().to_csv(index=False, lineterminator='\n')
        )

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(
            config=json.loads(self.config.json()),
            joints=self.net.joints,
            epoch=self.epoch,
            epoch_step=self.epoch_step,
            global_step=self.global_step,
            rng_state=self.epoch_start_state,
            epoch_sums=dict(self.epoch_sums),
            history=[dict(row) for row in self.history],
            params=self.net.params.state_dict(),
            optimizer=self.state.state_dict(),
        )

    def save(self) -> None:
        if self.out_dir is not None:
            save_checkpoint(self.fs.join_path(self.out_dir, CHECKPOINT_FILE), self.checkpoint(), self.fs)

    def restore(self, checkpoint: Checkpoint) -> None:
        """Continue from a checkpoint of the same configuration"""
        checkpoint.check_joints(self.net.joints)
        self.net.params.load_state_dict(checkpoint.params)
        self.state.load_state_dict(checkpoint.optimizer, checkpoint.global_step)
        if checkpoint.rng_state:
            self.epoch_start_state = dict(checkpoint.rng_state)
        self.epoch = checkpoint.epoch
        self.epoch_step = checkpoint.epoch_step
        self.global_step = checkpoint.global_step
        self.epoch_sums = dict(checkpoint.epoch_sums)
        self.history = [dict(row) for row in checkpoint.history]
        log.info('Resumed at epoch %s, step %s', self.epoch, self.global_step)


def loss_objective(net: JgrP2ONet, batch: Batch, loss: LossConfig, mode: Mode = Mode.EVAL) -> Objective:
    """Total loss of ``net`` on a fixed batch as a gradient-check objective

    Eval-mode batch norm keeps repeated evaluations identical.
    """
    x = batch.x.astype(net.dtype)
    pose = batch.pose.astype(net.dtype)
    grid = net.make_grid(x, batch.mask)
    targets = compute_offset_targets(pose, grid)

    def objective(params: ParamStore, *, backward: bool = False) -> float:
        outputs, cache = net.forward(x, grid, mode)
        poses = [o.pose for o in outputs]
        offsets = [o.offsets for o in outputs]
        report = total_loss(poses, offsets, pose, targets, loss)
        if backward:
            dposes, doffsets = total_loss_backward(poses, offsets, pose, targets, loss)
            net.backward(outputs, dposes, doffsets, cache)
        return report.total

    return objective


def fit(
    net: JgrP2ONet,
    dataset: HandDataset,
    config: 'RunConfig',
    callbacks: Sequence[Callback] = (),
    out_dir: Optional[str] = None,
    test_set: Optional[HandDataset] = None,
    resume: Optional[Checkpoint] = None,
) -> pd.DataFrame:
    """Train ``net`` on ``dataset`` for ``train.epochs`` epochs and return the per-epoch log"""
    trainer = Trainer(net, config, dataset, test_set, out_dir, callbacks)
    if resume is not None:
        trainer.restore(resume)
    return trainer.fit()
