from jgrp2o.model.topology import Topology  # noqa
from jgrp2o.model.backbone import BackboneConfig, Hourglass, StageBackbone, StageInput, Stem  # noqa
from jgrp2o.model.jgr import (  # noqa
    build_similarity_adjacency,
    build_skeleton_adjacency,
    graph_reason,
    GraphAdjacency,
    JgrConfig,
    JointGraphReasoning,
    VotingTensor,
)
from jgrp2o.model.p2o import (  # noqa
    aggregate_joints,
    compute_offset_targets,
    CoordinateGrid,
    make_coordinate_grid,
    OffsetHead,
    P2OConfig,
)
from jgrp2o.model.network import count_params, JgrP2ONet, ModelConfig, StageOutput  # noqa
