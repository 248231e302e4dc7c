import logging
import os
from concurrent.futures import Future, ThreadPoolExecutor
from typing import Iterator, List, NamedTuple, Optional

import numpy as np

from jgrp2o.data.augment import augment, AugmentConfig, sample_rng
from jgrp2o.data.dataset import HandDataset
from jgrp2o.data.frame import Sample

log = logging.getLogger(__name__)

THREADS_ENV = 'JGRP2O_THREADS'


def worker_count() -> int:
    """Worker threads for loading and inference, capped by ``JGRP2O_THREADS``"""
    default = min(4, os.cpu_count() or 1)
    value = os.environ.get(THREADS_ENV)
    if not value:
        return default
    try:
        return max(1, int(value))
    except ValueError:
        log.warning('Ignoring non-integer %s=%r', THREADS_ENV, value)
        return default


class Batch(NamedTuple):
    x: np.ndarray
    mask: np.ndarray
    pose: np.ndarray
    pose_world: np.ndarray
    indices: np.ndarray
    samples: List[Sample]

    @property
    def size(self) -> int:
        return self.x.shape[0]


def make_batch(samples: List[Sample], indices: Optional[np.ndarray] = None, dtype: type = np.float32) -> Batch:
    return Batch(
        x=np.stack([s.frame.pixels for s in samples])[..., None].astype(dtype),
        mask=np.stack([s.frame.mask for s in samples]),
        pose=np.stack([s.pose for s in samples]).astype(dtype),
        pose_world=np.stack([s.pose_world for s in samples]),
        indices=np.arange(len(samples)) if indices is None else np.asarray(indices),
        samples=samples,
    )


class BatchLoader:
    """Seeded epoch orders and batches, with samples prepared on a thread pool one batch ahead.

    Augmentation of sample ``i`` in epoch ``e`` draws from its own (seed, e, i) generator, so the result
    does not depend on the number of workers.
    """

    def __init__(
        self,
        dataset: HandDataset,
        batch_size: int,
        seed: int = 0,
        augment_config: Optional[AugmentConfig] = None,
        shuffle: bool = True,
        dtype: type = np.float32,
        workers: Optional[int] = None,
    ):
        self.dataset = dataset
        self.batch_size = batch_size
        self.seed = seed
        self.augment_config = augment_config
        self.shuffle = shuffle
        self.dtype = dtype
        self.workers = workers or worker_count()

    def __len__(self) -> int:
        return -(-len(self.dataset) // self.batch_size)

    def epoch_order(self, epoch: int) -> np.ndarray:
        if not self.shuffle:
            return np.arange(len(self.dataset))
        return np.random.default_rng(np.random.SeedSequence([self.seed, epoch])).permutation(len(self.dataset))

    def load(self, index: int, epoch: int) -> Sample:
        sample = self.dataset[int(index)]
        if self.augment_config is not None and self.augment_config.enabled:
            sample = augment(sample, sample_rng(self.seed, epoch, int(index)), self.augment_config)
        return sample

    def batches(self, epoch: int, start_step: int = 0, order: Optional[np.ndarray] = None) -> Iterator[Batch]:
        """Batches of one epoch in ``order`` (the seeded epoch order when omitted), skipping the first ``start_step``"""
        order = self.epoch_order(epoch) if order is None else np.asarray(order)
        chunks = [order[i:i + self.batch_size] for i in range(0, len(order), self.batch_size)][start_step:]
        if not chunks:
            return

        with ThreadPoolExecutor(max_workers=self.workers) as pool:

            def submit(chunk: np.ndarray) -> List['Future[Sample]']:
                return [pool.submit(self.load, index, epoch) for index in chunk]

            pending = submit(chunks[0])
            for step, chunk in enumerate(chunks):
                samples = [future.result() for future in pending]
                if step + 1 < len(chunks):
                    pending = submit(chunks[step + 1])
                log.debug('Epoch %s batch %s ready', epoch, start_step + step)
                yield make_batch(samples, chunk, self.dtype)
