import logging
from typing import Dict, Optional, Protocol

import numpy as np
from pydantic import BaseModel

from jgrp2o.common_types import Precision
from jgrp2o.exceptions import DeterminismError
from jgrp2o.numerics.params import ParamStore

log = logging.getLogger(__name__)

MIN_SCALARS_PER_ENTRY = 200
ERROR_FLOOR = 1e-8
OFFSET_SUFFIXES = ('/bias', '/shift')


class Objective(Protocol):
    def __call__(self, params: ParamStore, *, backward: bool = False) -> float:
        """Evaluate the scalar objective; with ``backward`` accumulate its gradient into ``params``."""


class GradCheckReport(BaseModel):
    max_error: float
    worst: str = ''
    checked: int = 0
    per_entry: Dict[str, float] = {}

    def __str__(self) -> str:
        return f'<GradCheckReport max_error={self.max_error:.3e} worst={self.worst} checked={self.checked}>'


def relative_error(g_ad: float, g_fd: float, floor: float = ERROR_FLOOR) -> float:
    """|g_ad - g_fd| relative to |g_ad| + |g_fd|; below ``floor`` the difference is compared absolutely"""
    return abs(g_ad - g_fd) / max(floor, abs(g_ad) + abs(g_fd))


def jitter_offsets(params: ParamStore, seed: int = 0, scale: float = 0.05) -> int:
    """Add seeded uniform noise in [-scale, scale) to every trainable bias and shift

    Freshly initialised offsets are exactly zero, which puts rectified pre-activations on the
    kink where finite differences and the analytic gradient disagree.

    Returns:
        number of entries moved
    """
    rng = np.random.default_rng(seed)
    moved = 0
    for parameter in params.trainable():
        if parameter.name.endswith(OFFSET_SUFFIXES):
            noise = rng.uniform(-scale, scale, size=parameter.shape)
            parameter.value[...] += noise.astype(parameter.value.dtype)
            moved += 1
    log.debug('Jittered %s offset entries by +-%s', moved, scale)
    return moved


def grad_check(
    objective: Objective,
    params: ParamStore,
    h: float = 1e-6,
    seed: int = 0,
    max_per_entry: Optional[int] = MIN_SCALARS_PER_ENTRY,
    floor: float = ERROR_FLOOR,
) -> GradCheckReport:
    """Compare reverse-mode gradients with central finite differences

    Args:
        objective: deterministic scalar objective over the store
        params: store whose trainable entries are perturbed
        h: finite-difference step
        seed: seed of the scalar subsampling
        max_per_entry: entries larger than this are checked on a seeded random subsample of
            this many scalars (never fewer than 200); None checks every scalar
        floor: gradient magnitude below which errors are absolute rather than relative

    Returns:
        GradCheckReport
    """
    if params.precision is not Precision.WIDE:
        log.warning('Gradient check in %s precision; finite differences are unreliable', params.precision.value)

    baseline = objective(params)
    repeated = objective(params)
    if baseline != repeated:
        log.error('Objective is not deterministic: %r != %r', baseline, repeated)
        raise DeterminismError(baseline, repeated)

    params.zero_grad()
    objective(params, backward=True)
    analytic = {p.name: p.grad.copy() for p in params.trainable()}

    rng = np.random.default_rng(seed)
    report = GradCheckReport(max_error=0.0)
    for parameter in params.trainable():
        flat = parameter.value.reshape(-1)
        indices = np.arange(flat.size)
        if max_per_entry is not None:
            limit = max(max_per_entry, MIN_SCALARS_PER_ENTRY)
            if flat.size > limit:
                indices = np.sort(rng.choice(flat.size, size=limit, replace=False))

        entry_error = 0.0
        for index in indices:
            original = flat[index]
            flat[index] = original + h
            plus = objective(params)
            flat[index] = original - h
            minus = objective(params)
            flat[index] = original

            g_fd = (plus - minus) / (2.0 * h)
            g_ad = float(analytic[parameter.name].reshape(-1)[index])
            error = relative_error(g_ad, g_fd, floor)
            if error > entry_error:
                entry_error = error
            if error > report.max_error:
                report.max_error = error
                report.worst = f'{parameter.name}[{index}] ad={g_ad:.6e} fd={g_fd:.6e}'
            report.checked += 1

        report.per_entry[parameter.name] = entry_error
        log.debug('Checked %s: %s scalars, max relative error %.3e', parameter.name, len(indices), entry_error)

    log.info('Gradient check finished: %s', report)
    return report
