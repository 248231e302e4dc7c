"""Joint graph reasoning: pixel-to-joint voting, one graph-convolution step over the joints,
joint-to-pixel mapping and fusion with the local features."""
import logging
from typing import Any, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from jgrp2o.common_types import check_rank4, GraphPolicy, Mode
from jgrp2o.exceptions import InputValidationError, ShapeError
from jgrp2o.model.layers import Conv2d, ConvBnRelu, Layer
from jgrp2o.model.topology import Edge, find_edge_problem, Topology
from jgrp2o.numerics import ops
from jgrp2o.numerics.params import ParamStore

log = logging.getLogger(__name__)

JointFeatures = np.ndarray
"""(B, N, C) stacked joint feature rows."""


class JgrConfig(BaseModel):
    enabled: bool = True
    graph: GraphPolicy = GraphPolicy.SKELETON
    topology: str = 'synth14'

    class Config:
        extra = 'forbid'
        validate_assignment = True


class VotingTensor:
    """Per-stage spatial-softmax weights (B, H, W, N).

    One instance is shared by voting, joint-to-pixel mapping and offset aggregation of a stage.
    """

    __slots__ = ('weights',)

    def __init__(self, weights: np.ndarray):
        check_rank4('VotingTensor', weights)
        self.weights = weights

    def __repr__(self) -> str:
        return f'<VotingTensor shape={self.weights.shape}>'

    @property
    def joints(self) -> int:
        return self.weights.shape[3]

    def flat(self) -> np.ndarray:
        """(B, H*W, N) view"""
        b, h, w, n = self.weights.shape
        return self.weights.reshape(b, h * w, n)

    @classmethod
    def uniform(cls, batch: int, height: int, width: int, joints: int, dtype: Any = np.float32) -> 'VotingTensor':
        return cls(np.full((batch, height, width, joints), 1.0 / (height * width), dtype=dtype))


class GraphAdjacency(BaseModel):
    matrix: np.ndarray
    policy: GraphPolicy
    edges: Tuple[Edge, ...] = ()
    adjacency: Optional[np.ndarray] = None
    degree: Optional[np.ndarray] = None

    class Config:
        arbitrary_types_allowed = True

    def __str__(self) -> str:
        return f'<GraphAdjacency policy={self.policy.value} shape={self.matrix.shape}>'


def build_skeleton_adjacency(edges: Sequence[Edge], joints: int, dtype: Any = np.float64) -> GraphAdjacency:
    """Symmetrically normalised skeleton adjacency D^-1/2 (A + I) D^-1/2

    Args:
        edges: undirected bone list without self-loops
        joints: N
        dtype: output dtype

    Returns:
        GraphAdjacency
    """
    problem = find_edge_problem(edges, joints)
    if problem is not None:
        edge, reason = problem
        log.error('Invalid skeleton edge %s: %s', edge, reason)
        raise InputValidationError('skeleton edge', detail=f'{edge}: {reason}')

    adjacency = np.zeros((joints, joints), dtype=np.float64)
    for i, j in edges:
        adjacency[i, j] = adjacency[j, i] = 1.0
    with_loops = adjacency + np.eye(joints)
    degree = with_loops.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(degree)
    matrix = with_loops * inv_sqrt[:, None] * inv_sqrt[None, :]
    return GraphAdjacency(
        matrix=matrix.astype(dtype),
        policy=GraphPolicy.SKELETON,
        edges=tuple((int(i), int(j)) for i, j in edges),
        adjacency=adjacency,
        degree=degree,
    )


def similarity_scores(features: JointFeatures, upsilon: np.ndarray, psi: np.ndarray) -> np.ndarray:
    return (features @ upsilon) @ np.swapaxes(features @ psi, -1, -2)


def build_similarity_adjacency(features: JointFeatures, upsilon: np.ndarray, psi: np.ndarray) -> GraphAdjacency:
    """Per-sample graph from softmax_j(upsilon(f_i)^T psi(f_j))

    Args:
        features: (B, N, C) or (N, C)
        upsilon: (C, C) bias-free linear map
        psi: (C, C) bias-free linear map

    Returns:
        GraphAdjacency with a (B, N, N) or (N, N) row-stochastic matrix
    """
    if features.shape[-1] != upsilon.shape[0] or features.shape[-1] != psi.shape[0]:
        raise ShapeError('build_similarity_adjacency', f'features {features.shape} vs maps {upsilon.shape}')
    matrix = ops.row_softmax(similarity_scores(features, upsilon, psi))
    return GraphAdjacency(matrix=matrix, policy=GraphPolicy.SIMILARITY)


def vote(weights: VotingTensor, transformed: np.ndarray) -> JointFeatures:
    """f_k = sum_i w_ki * t_i for already transformed pixel features t = varphi(X)"""
    w = weights.flat()
    if transformed.shape[:3] != weights.weights.shape[:3]:
        raise ShapeError('pixel_to_joint_vote', f'weights {weights.weights.shape} vs features {transformed.shape}')
    b, h, wd, c = transformed.shape
    return np.swapaxes(w, 1, 2) @ transformed.reshape(b, h * wd, c)


def graph_reason(features: JointFeatures, matrix: np.ndarray, transform: np.ndarray) -> JointFeatures:
    """F^e = ReLU(A^e F W^e)"""
    n, c = features.shape[-2:]
    if matrix.shape[-2:] != (n, n) or transform.shape != (c, c):
        log.error('graph_reason shapes: F %s, A %s, W %s', features.shape, matrix.shape, transform.shape)
        raise ShapeError('graph_reason', f'F {features.shape}, A {matrix.shape}, W {transform.shape}')
    return ops.relu(matrix @ features @ transform)


def map_to_pixels(weights: VotingTensor, evolved: JointFeatures) -> np.ndarray:
    """Pixel context before rho: c_i = (1/N) sum_k w_ki f^e_k, shaped (B, H, W, C)"""
    b, h, w, n = weights.weights.shape
    if evolved.shape[-2] != n:
        raise ShapeError('joint_to_pixel_map', f'{n} voting channels vs {evolved.shape[-2]} joints')
    context = weights.flat() @ evolved / n
    return context.reshape(b, h, w, evolved.shape[-1])


class VotingHead(Layer):
    """phi: 1x1 conv C -> N followed by the spatial softmax."""

    def __init__(self, params: ParamStore, name: str, channels: int, joints: int):
        super().__init__(params, name)
        self.phi = Conv2d(params, f'{name}/phi', channels, joints, bias=False)

    def forward(self, x: np.ndarray, mode: Mode = Mode.EVAL) -> Tuple[VotingTensor, Any]:
        logits, cache = self.phi.forward(x, mode)
        return VotingTensor(ops.spatial_softmax(logits)), cache

    def backward(self, dy: np.ndarray, cache: Any, voting: Optional[VotingTensor] = None) -> np.ndarray:
        assert voting is not None
        return self.phi.backward(ops.spatial_softmax_backward(dy, voting.weights), cache)


class JgrCache(NamedTuple):
    voting: VotingTensor
    phi: Any
    transformed: np.ndarray
    varphi: Any
    features: np.ndarray
    adjacency: np.ndarray
    similarity: Optional[Tuple[np.ndarray, np.ndarray]]
    pre_activation: np.ndarray
    evolved: np.ndarray
    rho: Any
    tau: Any


class JointGraphReasoning(Layer):
    """JGR module of one stage. Parameters live under ``<name>/{phi,varphi,upsilon,psi,we,adjacency,rho,tau}``."""

    def __init__(self, params: ParamStore, name: str, channels: int, topology: Topology, policy: GraphPolicy):
        super().__init__(params, name)
        self.channels = channels
        self.joints = topology.joints
        self.policy = GraphPolicy(policy)
        self.voting = VotingHead(params, name, channels, self.joints)
        self.varphi = Conv2d(params, f'{name}/varphi', channels, channels)
        self.we = params.add(f'{name}/we/kernel', (channels, channels), 'he_normal', fan_in=channels)
        self.rho = ConvBnRelu(params, f'{name}/rho', channels, channels)
        self.tau = ConvBnRelu(params, f'{name}/tau', 2 * channels, channels)

        self.skeleton = build_skeleton_adjacency(topology.edges, topology.joints, dtype=params.dtype)
        self.upsilon = self.psi = self.adjacency = None
        if self.policy is GraphPolicy.SIMILARITY:
            self.upsilon = params.add(f'{name}/upsilon/kernel', (channels, channels), 'he_normal', fan_in=channels)
            self.psi = params.add(f'{name}/psi/kernel', (channels, channels), 'he_normal', fan_in=channels)
        elif self.policy is GraphPolicy.PARAMETERIZED:
            noise = params.rng.uniform(-0.01, 0.01, size=(self.joints, self.joints))
            self.adjacency = params.add(
                f'{name}/adjacency', (self.joints, self.joints), self.skeleton.matrix + noise, fan_in=self.joints
            )

    def current_adjacency(self, features: Optional[JointFeatures] = None) -> GraphAdjacency:
        """A^e under the configured policy; similarity graphs need the joint features"""
        if self.policy is GraphPolicy.SKELETON:
            return self.skeleton
        if self.policy is GraphPolicy.PARAMETERIZED:
            assert self.adjacency is not None
            return GraphAdjacency(matrix=self.adjacency.value, policy=self.policy)
        assert self.upsilon is not None and self.psi is not None and features is not None
        return build_similarity_adjacency(features, self.upsilon.value, self.psi.value)

    def compute_voting_weights(self, x: np.ndarray) -> VotingTensor:
        return self.voting.forward(x)[0]

    def pixel_to_joint_vote(self, x: np.ndarray, weights: VotingTensor) -> JointFeatures:
        return vote(weights, self.varphi.forward(x)[0])

    def joint_to_pixel_map(self, evolved: JointFeatures, weights: VotingTensor, mode: Mode = Mode.EVAL) -> np.ndarray:
        return self.rho.forward(map_to_pixels(weights, evolved), mode)[0]

    def enhance_features(self, x: np.ndarray, context: np.ndarray, mode: Mode = Mode.EVAL) -> np.ndarray:
        if context.shape != x.shape:
            raise ShapeError('enhance_features', f'context {context.shape} vs features {x.shape}')
        return self.tau.forward(np.concatenate([context, x], axis=-1), mode)[0]

    def forward(self, x: np.ndarray, mode: Mode = Mode.EVAL) -> Tuple[np.ndarray, JgrCache]:
        """Augmented features X-bar; ``cache.voting`` is the stage's VotingTensor"""
        check_rank4(self.name, x)
        if x.shape[3] != self.channels:
            raise ShapeError(self.name, f'expected {self.channels} channels, got {x.shape[3]}')

        voting, phi_cache = self.voting.forward(x, mode)
        transformed, varphi_cache = self.varphi.forward(x, mode)
        features = vote(voting, transformed)

        similarity = None
        matrix = self.current_adjacency(features).matrix
        if self.policy is GraphPolicy.SIMILARITY:
            assert self.upsilon is not None and self.psi is not None
            similarity = (features @ self.upsilon.value, features @ self.psi.value)

        pre_activation = matrix @ features @ self.we.value
        evolved = ops.relu(pre_activation)
        context, rho_cache = self.rho.forward(map_to_pixels(voting, evolved), mode)
        augmented, tau_cache = self.tau.forward(np.concatenate([context, x], axis=-1), mode)
        cache = JgrCache(
            voting, phi_cache, transformed, varphi_cache, features, matrix, similarity,
            pre_activation, evolved, rho_cache, tau_cache,
        )
        return augmented, cache

    def backward(self, dy: np.ndarray, cache: JgrCache, dvoting: Optional[np.ndarray] = None) -> np.ndarray:
        """Gradient w.r.t. X given d X-bar and the extra gradient reaching the voting weights downstream"""
        c = self.channels
        n = self.joints
        w = cache.voting.flat()
        b, h, wd, _ = dy.shape

        dcat = self.tau.backward(dy, cache.tau)
        dx = dcat[..., c:].copy()
        dcontext = self.rho.backward(dcat[..., :c], cache.rho).reshape(b, h * wd, c)

        dw = dcontext @ np.swapaxes(cache.evolved, 1, 2) / n
        devolved = np.swapaxes(w, 1, 2) @ dcontext / n

        dpre = ops.relu_backward(devolved, cache.pre_activation)
        mixed = cache.adjacency @ cache.features
        self.we.grad += (np.swapaxes(mixed, 1, 2) @ dpre).sum(axis=0)
        dmixed = dpre @ self.we.value.T
        dmatrix = dmixed @ np.swapaxes(cache.features, 1, 2)
        dfeatures = np.swapaxes(cache.adjacency, -1, -2) @ dmixed

        if self.policy is GraphPolicy.PARAMETERIZED:
            assert self.adjacency is not None
            self.adjacency.grad += dmatrix.sum(axis=0)
        elif self.policy is GraphPolicy.SIMILARITY:
            assert self.upsilon is not None and self.psi is not None and cache.similarity is not None
            left, right = cache.similarity
            dscores = ops.row_softmax_backward(dmatrix, cache.adjacency)
            dleft = dscores @ right
            dright = np.swapaxes(dscores, 1, 2) @ left
            features_t = np.swapaxes(cache.features, 1, 2)
            self.upsilon.grad += (features_t @ dleft).sum(axis=0)
            self.psi.grad += (features_t @ dright).sum(axis=0)
            dfeatures = dfeatures + dleft @ self.upsilon.value.T + dright @ self.psi.value.T

        t = cache.transformed.reshape(b, h * wd, c)
        dw = dw + t @ np.swapaxes(dfeatures, 1, 2)
        dtransformed = (w @ dfeatures).reshape(b, h, wd, c)
        dx += self.varphi.backward(dtransformed, cache.varphi)

        if dvoting is not None:
            dw = dw + dvoting.reshape(b, h * wd, n)
        dx += self.voting.backward(dw.reshape(b, h, wd, n), cache.phi, cache.voting)
        return dx
