"""Incremental scattering-based partition of map nodes into connected regions.

A cluster's scattering is an additive offset plus the sum of squared
distances of its members from the centroid, divided by the cluster's
equivalent radius (the radius of an ideal disc holding the same number of
nodes at the density implied by n_des nodes inside r_max). New nodes join
the candidate cluster with the lowest hypothetical scattering if that stays
under the membership bound, and nodes may later migrate to an adjacent
cluster when the move strictly lowers the global dispersion sum without
splitting the cluster they leave.

Centroids and squared sums are cached and updated incrementally (Welford
style); tests cross-check them against from-scratch recomputation.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .errors import ConfigError, DataError
from .mapgraph import MapGraph

# Accepted reassignments must beat this margin so that cached and
# from-scratch scattering never disagree about the sign of the change.
REASSIGN_EPS = 1e-9


@dataclass(frozen=True)
class ClusteringParams:
    """Knobs of the scattering clusterer.

    s_prime: additive base offset of the score.
    s_max: membership bound (compared against s_prime + dispersion term,
        scaled by shape_factor).
    n_des: desired cluster cardinality.
    r_max: radius upper bound of the equivalent circle, meters.
    shape_factor: multiplier applied to s_max in the membership test.
    """

    s_prime: float = 0.5
    s_max: float = 3.0
    n_des: int = 30
    r_max: float = 5.0
    shape_factor: float = 1.0

    def __post_init__(self):
        if self.s_prime < 0:
            raise ConfigError("s_prime must be >= 0")
        if self.s_max <= self.s_prime:
            raise ConfigError("s_max must exceed s_prime")
        if self.n_des < 1:
            raise ConfigError("n_des must be >= 1")
        if self.r_max <= 0:
            raise ConfigError("r_max must be positive")
        if self.shape_factor <= 0:
            raise ConfigError("shape_factor must be positive")

    @property
    def bound(self) -> float:
        return self.s_max * self.shape_factor


@dataclass
class Cluster:
    """A region: member node ids with cached centroid and dispersion sum."""

    id: int
    members: set[int] = field(default_factory=set)
    cx: float = 0.0
    cy: float = 0.0
    sum_sq: float = 0.0

    @property
    def cardinality(self) -> int:
        return len(self.members)

    @property
    def centroid(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    def _add(self, x: float, y: float):
        # Welford update; call before adding the id to members.
        n = len(self.members)
        dx, dy = x - self.cx, y - self.cy
        self.cx += dx / (n + 1)
        self.cy += dy / (n + 1)
        self.sum_sq += dx * (x - self.cx) + dy * (y - self.cy)

    def _remove(self, x: float, y: float):
        # Inverse Welford update; call before discarding the id from members.
        n = len(self.members)
        ox, oy = self.cx, self.cy
        self.cx += (self.cx - x) / (n - 1)
        self.cy += (self.cy - y) / (n - 1)
        self.sum_sq = max(0.0, self.sum_sq - ((x - self.cx) * (x - ox) + (y - self.cy) * (y - oy)))


def equivalent_radius(cluster: Cluster, params: ClusteringParams) -> float:
    """Radius of the ideal disc standing in for the cluster's actual shape."""
    return _req(cluster.cardinality, params)


def _req(n: int, params: ClusteringParams) -> float:
    return params.r_max * min(1.0, math.sqrt(n / params.n_des))


def _dispersion(n: int, sum_sq: float, params: ClusteringParams) -> float:
    """Dispersion term: sum of squared centroid distances over the equivalent radius."""
    if n <= 1:
        return 0.0
    return sum_sq / _req(n, params)


def scattering(cluster: Cluster, params: ClusteringParams) -> float:
    """Cluster score: base offset plus the dispersion term."""
    return params.s_prime + _dispersion(cluster.cardinality, cluster.sum_sq, params)


def _hypothetical_add(cluster: Cluster, x: float, y: float, params: ClusteringParams):
    """(dispersion, sum_sq) of the cluster after inserting (x, y), without committing."""
    n = cluster.cardinality
    dx, dy = x - cluster.cx, y - cluster.cy
    nx = cluster.cx + dx / (n + 1)
    ny = cluster.cy + dy / (n + 1)
    s = cluster.sum_sq + dx * (x - nx) + dy * (y - ny)
    return _dispersion(n + 1, s, params), s


def _hypothetical_remove(cluster: Cluster, x: float, y: float, params: ClusteringParams) -> float:
    """Dispersion of the cluster after removing member at (x, y)."""
    n = cluster.cardinality
    if n <= 1:
        return 0.0
    nx = cluster.cx + (cluster.cx - x) / (n - 1)
    ny = cluster.cy + (cluster.cy - y) / (n - 1)
    s = max(0.0, cluster.sum_sq - ((x - nx) * (x - cluster.cx) + (y - ny) * (y - cluster.cy)))
    return _dispersion(n - 1, s, params)


@dataclass(frozen=True)
class ClusterChange:
    """One mutation performed while absorbing a node."""

    kind: str  # "assign" | "reassign"
    node: int
    from_region: int | None
    to_region: int


class RegionSet:
    """Dynamic partition of assigned nodes into clusters. Region ids are never reused."""

    def __init__(self):
        self.clusters: dict[int, Cluster] = {}
        self.node_to_region: dict[int, int] = {}
        self._next_id = 0
        self._last_assigned: int | None = None

    @property
    def current_region(self) -> int | None:
        """Region of the most recent assignment (follows it across reassignments)."""
        if self._last_assigned is None:
            return None
        return self.node_to_region.get(self._last_assigned)

    def region_of(self, node_id: int) -> int | None:
        return self.node_to_region.get(node_id)

    def _new_cluster(self) -> Cluster:
        c = Cluster(id=self._next_id)
        self.clusters[self._next_id] = c
        self._next_id += 1
        return c

    def _insert(self, cluster: Cluster, node_id: int, x: float, y: float):
        cluster._add(x, y)
        cluster.members.add(node_id)
        self.node_to_region[node_id] = cluster.id

    def _extract(self, cluster: Cluster, node_id: int, x: float, y: float):
        if cluster.cardinality == 1:
            cluster.members.discard(node_id)
            del self.clusters[cluster.id]
        else:
            cluster._remove(x, y)
            cluster.members.discard(node_id)
        del self.node_to_region[node_id]


def _pos(graph: MapGraph, node_id: int) -> tuple[float, float]:
    p = graph.nodes[node_id].pose
    return p.x, p.y


def assign(regions: RegionSet, graph: MapGraph, node_id: int, params: ClusteringParams) -> int:
    """Place an unassigned node into the best candidate cluster or a new one.

    Candidates are the current region plus the regions of graph-adjacent
    nodes; the node joins the candidate minimizing its hypothetical
    post-insertion scattering when that stays under the membership bound,
    ties going to the lowest region id.
    """
    if node_id in regions.node_to_region:
        raise DataError(f"node {node_id} already assigned")
    if node_id not in graph.nodes:
        raise DataError(f"node {node_id} not in graph")
    x, y = _pos(graph, node_id)

    candidates: set[int] = set()
    cur = regions.current_region
    if cur is not None:
        candidates.add(cur)
    for nb in graph.neighbors(node_id):
        r = regions.node_to_region.get(nb)
        if r is not None:
            candidates.add(r)

    best_id: int | None = None
    best_score = math.inf
    for rid in sorted(candidates):
        disp, _ = _hypothetical_add(regions.clusters[rid], x, y, params)
        score = params.s_prime + disp
        if score < best_score:
            best_id, best_score = rid, score

    if best_id is not None and best_score <= params.bound:
        target = regions.clusters[best_id]
    else:
        target = regions._new_cluster()
    regions._insert(target, node_id, x, y)
    graph.nodes[node_id].region = target.id
    regions._last_assigned = node_id
    return target.id


def _connected_without(graph: MapGraph, members: set[int], removed: int) -> bool:
    """True if the member set minus one node still induces a connected subgraph."""
    rest = members - {removed}
    if len(rest) <= 1:
        return True
    start = next(iter(rest))
    seen = {start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nb in graph.adjacency[cur]:
            if nb in rest and nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return len(seen) == len(rest)


def try_reassign(regions: RegionSet, graph: MapGraph, node_id: int,
                 params: ClusteringParams) -> tuple[int, int] | None:
    """Move a node to an adjacent cluster if that strictly lowers global dispersion.

    The move is legal only when the source cluster stays connected after the
    removal (or empties, deleting it). Among improving targets the largest
    global decrease wins, ties by lowest region id. Returns (from, to) or None.
    """
    rid_a = regions.node_to_region.get(node_id)
    if rid_a is None:
        raise DataError(f"node {node_id} is not assigned")
    a = regions.clusters[rid_a]
    x, y = _pos(graph, node_id)

    target_ids = sorted({
        regions.node_to_region[nb]
        for nb in graph.neighbors(node_id)
        if nb in regions.node_to_region and regions.node_to_region[nb] != rid_a
    })
    if not target_ids:
        return None
    if not _connected_without(graph, a.members, node_id):
        return None

    disp_a = _dispersion(a.cardinality, a.sum_sq, params)
    decrease = disp_a - _hypothetical_remove(a, x, y, params)

    best_id: int | None = None
    best_delta = REASSIGN_EPS
    for rid_b in target_ids:
        b = regions.clusters[rid_b]
        disp_after, _ = _hypothetical_add(b, x, y, params)
        increase = disp_after - _dispersion(b.cardinality, b.sum_sq, params)
        delta = decrease - increase
        if delta > best_delta:
            best_id, best_delta = rid_b, delta
    if best_id is None:
        return None

    regions._extract(a, node_id, x, y)
    regions._insert(regions.clusters[best_id], node_id, x, y)
    graph.nodes[node_id].region = best_id
    return (rid_a, best_id)


def on_new_node(regions: RegionSet, graph: MapGraph, node_id: int,
                params: ClusteringParams) -> list[ClusterChange]:
    """Assign a fresh node, then relax its one-hop neighborhood to a fixpoint.

    Every accepted move strictly decreases the global dispersion sum, which
    is bounded below, so the relaxation terminates.
    """
    rid = assign(regions, graph, node_id, params)
    changes = [ClusterChange("assign", node_id, None, rid)]

    scope = [node_id] + sorted(graph.neighbors(node_id))
    moved = True
    while moved:
        moved = False
        for cand in scope:
            if cand not in regions.node_to_region:
                continue
            result = try_reassign(regions, graph, cand, params)
            if result is not None:
                changes.append(ClusterChange("reassign", cand, result[0], result[1]))
                moved = True
    return changes


def global_dispersion(regions: RegionSet, params: ClusteringParams) -> float:
    """Sum of the dispersion terms over all clusters (cached values)."""
    return sum(_dispersion(c.cardinality, c.sum_sq, params) for c in regions.clusters.values())


def recompute_cluster(graph: MapGraph, members: set[int]) -> tuple[float, float, float]:
    """From-scratch (centroid_x, centroid_y, sum_sq) for a member set. Test oracle."""
    xs = [graph.nodes[m].pose.x for m in members]
    ys = [graph.nodes[m].pose.y for m in members]
    n = len(members)
    cx, cy = sum(xs) / n, sum(ys) / n
    ssq = sum((x - cx) ** 2 + (y - cy) ** 2 for x, y in zip(xs, ys))
    return cx, cy, ssq


def cluster_rows(regions: RegionSet, graph: MapGraph) -> list[tuple[int, float, float, int]]:
    """Rows of the cluster dump: (node_id, x, y, region_id), sorted by node id."""
    rows = []
    for node_id in sorted(regions.node_to_region):
        p = graph.nodes[node_id].pose
        rows.append((node_id, p.x, p.y, regions.node_to_region[node_id]))
    return rows
