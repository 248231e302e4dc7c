import logging
from typing import Any, List, NamedTuple, Optional, Sequence, Tuple, TYPE_CHECKING

import numpy as np
import pandas as pd
from pydantic import BaseModel, validator

from jgrp2o.common_types import check_rank4, Mode, Precision, Weighting
from jgrp2o.exceptions import ShapeError
from jgrp2o.model.backbone import BackboneConfig, StageBackbone, StageInput, Stem
from jgrp2o.model.jgr import JgrConfig, JointGraphReasoning, VotingTensor
from jgrp2o.model.p2o import (
    aggregate_joints,
    aggregate_joints_backward,
    CoordinateGrid,
    grid_from_depth,
    OffsetHead,
    OffsetMaps,
    P2OConfig,
    PoseUVZ,
)
from jgrp2o.model.topology import Topology
from jgrp2o.numerics.params import ParamStore

if TYPE_CHECKING:
    from jgrp2o.config import RunConfig

log = logging.getLogger(__name__)


class ModelConfig(BaseModel):
    joints: int = 14
    precision: Precision = Precision.STANDARD

    class Config:
        extra = 'forbid'
        validate_assignment = True

    @validator('joints')
    def at_least_one_joint(cls, v: int) -> int:
        if v < 1:
            raise ValueError('at least one joint is required')
        return v


class StageOutput(NamedTuple):
    pose: PoseUVZ
    offsets: OffsetMaps
    voting: VotingTensor


class Stage:
    """Layers of one stacked stage; ``input`` is None for the first stage."""

    def __init__(
        self,
        params: ParamStore,
        index: int,
        backbone: BackboneConfig,
        jgr: JgrConfig,
        topology: Topology,
    ):
        name = f'stage{index}'
        channels = backbone.channels
        self.index = index
        self.name = name
        self.input = StageInput(params, f'{name}/input', channels) if index > 1 else None
        self.backbone = StageBackbone(params, f'{name}/backbone', backbone)
        self.jgr = JointGraphReasoning(params, f'{name}/jgr', channels, topology, jgr.graph) if jgr.enabled else None
        self.head = OffsetHead(params, f'{name}/p2o', channels, topology.joints)


class ForwardCache(NamedTuple):
    stem: Any
    grid: CoordinateGrid
    stages: List[Any]


class JgrP2ONet:
    """Stacked hourglass stages with joint graph reasoning and a pixel-to-offset head per stage.

    Every stage is supervised; the last stage's pose is the prediction.
    """

    def __init__(
        self,
        model: ModelConfig,
        backbone: BackboneConfig,
        jgr: JgrConfig,
        p2o: P2OConfig,
        topology: Optional[Topology] = None,
        seed: int = 0,
    ):
        """
        Args:
            model: joint count and precision
            backbone: hourglass layout
            jgr: graph reasoning switch, policy and topology name
            p2o: aggregation weighting
            topology: explicit topology, otherwise loaded from ``jgr.topology``
            seed: initialisation seed
        """
        self.model_config = model
        self.backbone_config = backbone
        self.jgr_config = jgr
        self.p2o_config = p2o
        self.topology = topology or Topology.load(jgr.topology, joints=model.joints)
        if self.topology.joints != model.joints:
            raise ShapeError('JgrP2ONet', f'topology has {self.topology.joints} joints, model expects {model.joints}')

        self.params = ParamStore(model.precision, seed)
        self.stem = Stem(self.params, 'stem', backbone)
        self.stages = [Stage(self.params, s, backbone, jgr, self.topology) for s in range(1, backbone.stages + 1)]
        log.debug('Built %s with %s stages', self.params, len(self.stages))

    def __str__(self) -> str:
        return f'<JgrP2ONet joints={self.joints} stages={len(self.stages)} params={self.params.count()}>'

    @classmethod
    def from_config(cls, config: 'RunConfig', seed: Optional[int] = None) -> 'JgrP2ONet':
        return cls(
            config.model,
            config.backbone,
            config.jgr,
            config.p2o,
            seed=config.train.seed if seed is None else seed,
        )

    @property
    def joints(self) -> int:
        return self.model_config.joints

    @property
    def dtype(self) -> Any:
        return self.params.dtype

    @property
    def uses_voting(self) -> bool:
        return self.jgr_config.enabled and self.p2o_config.weighting is Weighting.VOTING

    def make_grid(self, x: np.ndarray, valid: Optional[np.ndarray] = None) -> CoordinateGrid:
        """Offset-map coordinate grid of an input batch; ``valid`` is the crop validity mask, all pixels when omitted"""
        depth = x[..., 0]
        mask = valid if valid is not None else np.ones(depth.shape, dtype=bool)
        return grid_from_depth(depth, mask, self.backbone_config.feature_size)

    def forward(
        self, x: np.ndarray, grid: Optional[CoordinateGrid] = None, mode: Mode = Mode.EVAL
    ) -> Tuple[List[StageOutput], ForwardCache]:
        """Run every stage

        Args:
            x: (B, input_size, input_size, 1) normalised depth
            grid: coordinate grid at feature resolution, derived from ``x`` when omitted
            mode: batch-norm mode

        Returns:
            per-stage outputs and the cache consumed by ``backward``
        """
        check_rank4('JgrP2ONet.forward', x)
        x = x.astype(self.dtype, copy=False)
        if grid is None:
            grid = self.make_grid(x)

        stem_out, stem_cache = self.stem.forward(x, mode)
        outputs: List[StageOutput] = []
        caches: List[Any] = []
        augmented = None
        for stage in self.stages:
            if stage.input is not None:
                h, input_cache = stage.input.forward_pair(stem_out, augmented)
            else:
                h, input_cache = stem_out, None
            features, backbone_cache = stage.backbone.forward(h, mode)

            jgr_cache = None
            if stage.jgr is not None:
                augmented, jgr_cache = stage.jgr.forward(features, mode)
            else:
                augmented = features

            offsets, head_cache = stage.head.forward(augmented, mode)
            if self.uses_voting:
                assert jgr_cache is not None
                voting = jgr_cache.voting
            else:
                b, r = offsets.shape[0], offsets.shape[1]
                voting = VotingTensor.uniform(b, r, r, self.joints, dtype=self.dtype)
            pose = aggregate_joints(offsets, grid, voting)
            outputs.append(StageOutput(pose, offsets, voting))
            caches.append((input_cache, backbone_cache, jgr_cache, head_cache))
        return outputs, ForwardCache(stem_cache, grid, caches)

    def backward(
        self,
        outputs: Sequence[StageOutput],
        dposes: Sequence[np.ndarray],
        doffsets: Sequence[Optional[np.ndarray]],
        cache: ForwardCache,
    ) -> np.ndarray:
        """Accumulate parameter gradients from per-stage loss gradients

        Args:
            outputs: the forward outputs
            dposes: dL/dpose per stage
            doffsets: dL/doffsets per stage from the offset loss, or None
            cache: the forward cache

        Returns:
            gradient w.r.t. the input depth
        """
        dstem = None
        dnext = None
        for stage, output, dpose, doff, (input_cache, backbone_cache, jgr_cache, head_cache) in reversed(
            list(zip(self.stages, outputs, dposes, doffsets, cache.stages))
        ):
            doff_total, dweights = aggregate_joints_backward(dpose, output.offsets, cache.grid, output.voting)
            if doff is not None:
                doff_total = doff_total + doff
            daugmented = stage.head.backward(doff_total, head_cache)
            if dnext is not None:
                daugmented = daugmented + dnext

            if stage.jgr is not None:
                dfeatures = stage.jgr.backward(daugmented, jgr_cache, dweights if self.uses_voting else None)
            else:
                dfeatures = daugmented
            dh = stage.backbone.backward(dfeatures, backbone_cache)

            dstem = dh if dstem is None else dstem + dh
            dnext = stage.input.backward(dh, input_cache) if stage.input is not None else None

        assert dstem is not None
        return self.stem.backward(dstem, cache.stem)

    def predict(self, x: np.ndarray, grid: Optional[CoordinateGrid] = None) -> PoseUVZ:
        """Final-stage pose in eval mode"""
        outputs, _ = self.forward(x, grid, Mode.EVAL)
        return outputs[-1].pose

    def count_params(self) -> int:
        return self.params.count()

    def parameter_breakdown(self) -> pd.DataFrame:
        """Trainable scalars per module (``stem``, ``stage1/backbone``, ``stage1/jgr``, ...)"""
        modules = ['stem']
        for stage in self.stages:
            modules.extend(f'{stage.name}/{part}' for part in ('input', 'backbone', 'jgr', 'p2o'))
        rows = [
            {'module': module, 'params': self.params.count(prefix=f'{module}/')}
            for module in modules
        ]
        table = pd.DataFrame([row for row in rows if row['params']], columns=['module', 'params'])
        total = pd.DataFrame([{'module': 'total', 'params': self.params.count()}])
        return pd.concat([table, total], ignore_index=True)


def count_params(config: 'RunConfig') -> int:
    """Exact trainable scalar count of the configured model"""
    return JgrP2ONet.from_config(config).count_params()
