import logging
import os
from os.path import dirname, join
from typing import List, Optional, Sequence, Tuple

from pydantic import BaseModel, validator

from jgrp2o.exceptions import DatasetFormatError, DatasetIOError, TopologyError

log = logging.getLogger(__name__)

TOPOLOGY_DIR = join(dirname(dirname(__file__)), 'topologies')

Edge = Tuple[int, int]


def find_edge_problem(edges: Sequence[Edge], joints: int) -> Optional[Tuple[Edge, str]]:
    """First structural problem of an edge list

    Args:
        edges: undirected joint index pairs, 0-based
        joints: number of joints N

    Returns:
        (edge, reason) or None when the list is valid
    """
    seen = set()
    for i, j in edges:
        if not (0 <= i < joints and 0 <= j < joints):
            return (i, j), f'joint index out of range [0, {joints})'
        if i == j:
            return (i, j), 'self-loops are added by the normalisation, not listed'
        key = (min(i, j), max(i, j))
        if key in seen:
            return (i, j), 'duplicate edge'
        seen.add(key)
    return None


class Topology(BaseModel):
    name: str
    joints: int
    edges: List[Edge]

    class Config:
        frozen = True

    def __str__(self) -> str:
        return f'<Topology name={self.name} joints={self.joints} edges={len(self.edges)}>'

    @validator('edges')
    def check_edges(cls, v: List[Edge], values: dict) -> List[Edge]:
        if 'joints' not in values:
            return v
        problem = find_edge_problem(v, values['joints'])
        if problem is not None:
            edge, reason = problem
            raise TopologyError(edge=edge, reason=reason)
        return v

    @classmethod
    def shipped(cls) -> List[str]:
        """Names of the topologies bundled with the package"""
        return sorted(name[:-4] for name in os.listdir(TOPOLOGY_DIR) if name.endswith('.txt'))

    @classmethod
    def is_bundled(cls, name: str) -> bool:
        return os.path.isfile(join(TOPOLOGY_DIR, f'{name}.txt'))

    @classmethod
    def load(cls, name_or_path: str, joints: Optional[int] = None) -> 'Topology':
        """Load a bundled topology by name or an edge-list file by path

        The edge-list format is one ``i j`` pair of 0-based joint indices per line; blank lines and
        lines starting with ``#`` are ignored.

        Args:
            name_or_path: bundled name (e.g. 'icvl16') or a file path
            joints: joint count; defaults to the number in a bundled name, or max index + 1

        Returns:
            Topology
        """
        bundled = join(TOPOLOGY_DIR, f'{name_or_path}.txt')
        path = bundled if os.path.isfile(bundled) else name_or_path
        if not os.path.isfile(path):
            log.error('Topology %s is neither bundled nor an existing file', name_or_path)
            raise DatasetIOError(path, f'unknown topology; bundled: {", ".join(cls.shipped())}')

        edges = parse_edge_list(path)
        if joints is None:
            digits = ''.join(ch for ch in os.path.basename(name_or_path) if ch.isdigit())
            if path == bundled and digits:
                joints = int(digits)
            else:
                joints = 1 + max((max(edge) for edge in edges), default=0)
        name = name_or_path if path == bundled else os.path.splitext(os.path.basename(path))[0]
        log.debug('Loaded topology %s from %s', name, path)
        return cls(name=name, joints=joints, edges=edges)


def parse_edge_list(path: str) -> List[Edge]:
    edges = []
    with open(path, 'r') as f:
        for line_number, line in enumerate(f, start=1):
            text = line.split('#', 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 2:
                raise DatasetFormatError(path, line_number, f'expected "i j", got "{text}"')
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise DatasetFormatError(path, line_number, f'non-integer joint index in "{text}"')
    return edges
