"""Pose-graph data model: nodes with poses and feature vectors, odometry/loop edges.

Single-writer structure: mutate from one thread at a time; read-only views are
safe to share once a mutation has completed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .geometry import Pose2

ODOMETRY = "odometry"
LOOP_CLOSURE = "loop_closure"

FEATURE_NORM_TOL = 1e-6


def unit_feature(feature, dim: int | None = None) -> np.ndarray:
    """Validate a feature vector and return it L2-normalized (float64 copy)."""
    f = np.asarray(feature, dtype=np.float64)
    if f.ndim != 1:
        raise DataError(f"feature must be a 1-D vector, got shape {f.shape}")
    if dim is not None and f.shape[0] != dim:
        raise DataError(f"feature dimension mismatch: expected {dim}, got {f.shape[0]}")
    if not np.all(np.isfinite(f)):
        raise DataError("non-finite feature vector")
    norm = float(np.linalg.norm(f))
    if norm <= 0.0:
        raise DataError("zero-norm feature vector cannot be normalized")
    return f / norm


@dataclass
class Node:
    """A pose-graph vertex: planar pose, creation time, unit-norm signature."""

    id: int
    pose: Pose2
    timestamp: float
    feature: np.ndarray
    region: int | None = None


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    kind: str = ODOMETRY


class MapGraph:
    """Id-indexed nodes plus undirected edges with per-node adjacency sets.

    Node ids are sequential from 0 in insertion order. Inserting a node links
    it to the previously inserted one with an odometry edge, unless the graph
    is empty or a new session was just opened via start_new_session().
    """

    def __init__(self):
        self.nodes: dict[int, Node] = {}
        self.edges: list[Edge] = []
        self.adjacency: dict[int, set[int]] = {}
        self.feature_dim: int | None = None
        self._last_id: int | None = None
        self._last_timestamp: float | None = None
        self._break_chain = False

    def __len__(self) -> int:
        return len(self.nodes)

    def start_new_session(self):
        """Suppress the odometry edge before the next insertion (session break)."""
        self._break_chain = True

    def add_node(self, pose: Pose2, timestamp: float, feature) -> int:
        """Insert a node, auto-chained to its predecessor by an odometry edge.

        Timestamps must be non-decreasing across insertions within a session.
        """
        if not isinstance(pose, Pose2):
            pose = Pose2(*pose)
        if self._last_timestamp is not None and not self._break_chain \
                and timestamp < self._last_timestamp:
            raise DataError(
                f"non-monotone time: {timestamp} after {self._last_timestamp}")
        f = unit_feature(feature, self.feature_dim)
        if self.feature_dim is None:
            self.feature_dim = f.shape[0]

        node_id = 0 if self._last_id is None else self._last_id + 1
        self.nodes[node_id] = Node(id=node_id, pose=pose, timestamp=float(timestamp), feature=f)
        self.adjacency[node_id] = set()
        if self._last_id is not None and not self._break_chain:
            self.add_edge(self._last_id, node_id, ODOMETRY)
        self._break_chain = False
        self._last_id = node_id
        self._last_timestamp = float(timestamp)
        return node_id

    def add_edge(self, a: int, b: int, kind: str = LOOP_CLOSURE):
        if a == b:
            raise DataError(f"self-edge on node {a}")
        if a not in self.nodes or b not in self.nodes:
            raise DataError(f"edge ({a}, {b}) references a missing node")
        self.edges.append(Edge(a, b, kind))
        self.adjacency[a].add(b)
        self.adjacency[b].add(a)

    def has_edge(self, a: int, b: int) -> bool:
        return a in self.adjacency and b in self.adjacency[a]

    def neighbors(self, node_id: int) -> set[int]:
        return self.adjacency[node_id]

    def node(self, node_id: int) -> Node:
        return self.nodes[node_id]
