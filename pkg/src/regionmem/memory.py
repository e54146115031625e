"""Working-memory maintenance with region-probability-driven retrieval.

Nodes live in exactly one tier: STM (the most recent few, immune to
everything), WM (the active set used for loop-closure hypotheses), or LTM
(everything else, reachable only through retrieval). Each update runs the
transfer-retrieval cycle: hypothesis selection, neighborhood retrieval on
loop closure, confidence fusion, region-directed retrieval, then transfer
of the least promising WM nodes until WM fits its capacity again.

The baseline policy keeps the same tiers and capacity but retrieves nothing
by region and transfers by least-recent-use only.

LTM lookups go through incremental indexes (uniform spatial grid, id
buckets, per-region member sets) so a single update costs the same on a
10k-node map as on a 1k-node map.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .clustering import RegionSet
from .errors import ConfigError, DataError
from .geometry import planar_distance
from .mapgraph import LOOP_CLOSURE, MapGraph
from .predictor import EmaState, ema_update, top_k

POLICY_REGION = "region"
POLICY_BASELINE = "baseline"

# Pool width multiplier for the mixed-rank neighborhood retrieval. The two
# k-nearest pools (by id, by position) are this many times wider than k1 so
# the mixed ranking has slack to disagree with either single ordering.
U1_POOL_FACTOR = 4


@dataclass(frozen=True)
class MemoryParams:
    """Tier sizes and policy knobs for the memory manager."""

    n_wm: int = 50
    k1: int = 2
    k2_frac: float = 0.25
    m_stm: int = 10
    tau_loop: float = 0.85
    alpha: float = 0.3
    policy: str = POLICY_REGION
    grid_cell: float = 5.0

    def __post_init__(self):
        if self.n_wm < 1:
            raise ConfigError("n_wm must be >= 1")
        if self.k1 < 0:
            raise ConfigError("k1 must be >= 0")
        if not 0.0 <= self.k2_frac <= 1.0:
            raise ConfigError("k2_frac must lie in [0, 1]")
        if self.m_stm < 0:
            raise ConfigError("m_stm must be >= 0")
        if not 0.0 < self.tau_loop <= 1.0:
            raise ConfigError("tau_loop must lie in (0, 1]")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must lie in (0, 1]")
        if self.policy not in (POLICY_REGION, POLICY_BASELINE):
            raise ConfigError(f"unknown policy {self.policy!r}")
        if self.grid_cell <= 0:
            raise ConfigError("grid_cell must be positive")
        if self.k1 + self.k2 > self.n_wm:
            raise ConfigError(
                f"k1 + k2 = {self.k1 + self.k2} exceeds WM capacity {self.n_wm}")

    @property
    def k2(self) -> int:
        return math.ceil(self.k2_frac * self.n_wm)

    @property
    def k3(self) -> int:
        return self.n_wm - self.k1 - self.k2


class _GridIndex:
    """Uniform-grid spatial index over LTM node positions."""

    def __init__(self, cell: float):
        self.cell = cell
        self.cells: dict[tuple[int, int], set[int]] = {}
        self.pos: dict[int, tuple[float, float]] = {}

    def __len__(self) -> int:
        return len(self.pos)

    def _key(self, x: float, y: float) -> tuple[int, int]:
        return (math.floor(x / self.cell), math.floor(y / self.cell))

    def add(self, nid: int, x: float, y: float):
        self.pos[nid] = (x, y)
        self.cells.setdefault(self._key(x, y), set()).add(nid)

    def remove(self, nid: int):
        x, y = self.pos.pop(nid)
        key = self._key(x, y)
        bucket = self.cells[key]
        bucket.discard(nid)
        if not bucket:
            del self.cells[key]

    def nearest(self, x: float, y: float, k: int) -> list[int]:
        """k nearest ids by planar distance, ties by lower id."""
        if k < 1 or not self.pos:
            return []
        cx, cy = self._key(x, y)
        best: list[tuple[float, int]] = []
        ring = 0
        max_ring = 1
        while self.cells:
            for gx in range(cx - ring, cx + ring + 1):
                for gy in range(cy - ring, cy + ring + 1):
                    if max(abs(gx - cx), abs(gy - cy)) != ring:
                        continue
                    for nid in self.cells.get((gx, gy), ()):
                        px, py = self.pos[nid]
                        best.append((math.hypot(px - x, py - y), nid))
            if len(best) >= k:
                best.sort()
                # Cells beyond this ring cannot hold anything closer than
                # ring * cell from the query, so the k best are final.
                if best[min(k, len(best)) - 1][0] <= ring * self.cell:
                    break
            ring += 1
            if ring > max_ring:
                max_ring = max((max(abs(gx - cx), abs(gy - cy))
                                for gx, gy in self.cells), default=0)
                if ring > max_ring:
                    break
        best.sort()
        return [nid for _, nid in best[:k]]


class _IdIndex:
    """Bucketed index answering k-nearest-by-id queries over LTM ids."""

    WIDTH = 64

    def __init__(self):
        self.buckets: dict[int, set[int]] = {}

    def __len__(self) -> int:
        return sum(len(b) for b in self.buckets.values())

    def add(self, nid: int):
        self.buckets.setdefault(nid // self.WIDTH, set()).add(nid)

    def remove(self, nid: int):
        key = nid // self.WIDTH
        bucket = self.buckets[key]
        bucket.discard(nid)
        if not bucket:
            del self.buckets[key]

    def nearest(self, nid: int, k: int) -> list[int]:
        """k nearest ids by |id difference|, ties by lower id."""
        if k < 1 or not self.buckets:
            return []
        center = nid // self.WIDTH
        cand: list[tuple[int, int]] = []
        dist = 0
        span = max(abs(b - center) for b in self.buckets)
        while dist <= span:
            keys = (center,) if dist == 0 else (center - dist, center + dist)
            for key in keys:
                for other in self.buckets.get(key, ()):
                    cand.append((abs(other - nid), other))
            if len(cand) >= k:
                cand.sort()
                # A bucket at distance d holds ids at least (d-1)*WIDTH+1 away.
                if cand[min(k, len(cand)) - 1][0] <= dist * self.WIDTH:
                    break
            dist += 1
        cand.sort()
        return [other for _, other in cand[:k]]


@dataclass
class UpdateEvents:
    """What one memory update did, in emission order."""

    step: int
    node_id: int
    hypothesis_id: int | None = None
    hypothesis_score: float = 0.0
    loop_closed: bool = False
    retrieved_u1: list[int] = field(default_factory=list)
    retrieved_u3: list[int] = field(default_factory=list)
    transferred: list[int] = field(default_factory=list)
    wm_size: int = 0
    top_regions: list[int] = field(default_factory=list)
    immunized: list[int] = field(default_factory=list)
    overflowed: bool = False


class MemoryState:
    """Tier membership plus the fused region probabilities."""

    def __init__(self, params: MemoryParams):
        self.params = params
        self.stm: deque[int] = deque()
        self.wm: dict[int, int] = {}
        self.ltm_grid = _GridIndex(params.grid_cell)
        self.ltm_ids = _IdIndex()
        self.ltm_regions: dict[int, set[int]] = {}
        self.ltm_regionless: set[int] = set()
        self.ema = EmaState(params.alpha)
        self.step = 0
        self._tracked: set[int] = set()

    def __contains__(self, nid: int) -> bool:
        return nid in self._tracked

    @property
    def ltm_size(self) -> int:
        return len(self.ltm_grid)

    def ltm_members(self, region: int | None) -> set[int]:
        if region is None:
            return self.ltm_regionless
        return self.ltm_regions.get(region, set())

    def _ltm_add(self, graph: MapGraph, nid: int):
        node = graph.node(nid)
        self.ltm_grid.add(nid, node.pose.x, node.pose.y)
        self.ltm_ids.add(nid)
        if node.region is None:
            self.ltm_regionless.add(nid)
        else:
            self.ltm_regions.setdefault(node.region, set()).add(nid)

    def _ltm_remove(self, graph: MapGraph, nid: int):
        node = graph.node(nid)
        self.ltm_grid.remove(nid)
        self.ltm_ids.remove(nid)
        if node.region is None:
            self.ltm_regionless.discard(nid)
        else:
            members = self.ltm_regions.get(node.region)
            if members is not None:
                members.discard(nid)
                if not members:
                    del self.ltm_regions[node.region]

    def note_region_change(self, nid: int, old: int | None, new: int | None):
        """Keep the LTM region index in step with cluster reassignments."""
        if nid not in self.ltm_grid.pos:
            return
        src = self.ltm_regionless if old is None else self.ltm_regions.get(old, set())
        src.discard(nid)
        if old is not None and not src:
            self.ltm_regions.pop(old, None)
        if new is None:
            self.ltm_regionless.add(nid)
        else:
            self.ltm_regions.setdefault(new, set()).add(nid)

    def region_probability(self, graph: MapGraph, nid: int) -> float:
        region = graph.node(nid).region
        if region is None or region >= len(self.ema):
            return 0.0
        return float(self.ema.p[region])

    def start_new_session(self, graph: MapGraph):
        """Flush STM to LTM and keep WM as it was at shutdown."""
        while self.stm:
            self._ltm_add(graph, self.stm.popleft())
        graph.start_new_session()


def similarity(f_a, f_b) -> float:
    """Cosine similarity of unit features rescaled to [0, 1]."""
    return (1.0 + float(f_a @ f_b)) / 2.0


def insert_new_node(state: MemoryState, graph: MapGraph, nid: int):
    """Admit a freshly added graph node into STM, spilling the oldest to WM."""
    if nid in state:
        raise DataError(f"node {nid} already managed")
    if nid not in graph.nodes:
        raise DataError(f"node {nid} not in graph")
    state._tracked.add(nid)
    state.stm.append(nid)
    if len(state.stm) > state.params.m_stm:
        spilled = state.stm.popleft()
        state.wm[spilled] = state.step


def best_hypothesis(state: MemoryState, graph: MapGraph, v_id: int):
    """Highest-similarity WM candidate for the current node, or None.

    Nodes within the STM horizon of the current id are skipped: the robot
    just came from them, so matching there says nothing about revisiting.
    """
    v = graph.node(v_id)
    best_score = -1.0
    best_id = None
    for nid in state.wm:
        if abs(nid - v_id) <= state.params.m_stm:
            continue
        score = similarity(v.feature, graph.node(nid).feature)
        if score > best_score or (score == best_score and (best_id is None or nid < best_id)):
            best_score = score
            best_id = nid
    if best_id is None:
        return None
    return best_id, best_score


def _retrieve_u1(state: MemoryState, graph: MapGraph, h_id: int) -> list[int]:
    """k1 LTM nodes ranked by combined id-closeness and planar closeness to h."""
    k1 = state.params.k1
    if k1 == 0 or state.ltm_size == 0:
        return []
    h = graph.node(h_id)
    pool_size = U1_POOL_FACTOR * k1
    pool = set(state.ltm_ids.nearest(h_id, pool_size))
    pool.update(state.ltm_grid.nearest(h.pose.x, h.pose.y, pool_size))
    by_id = sorted(pool, key=lambda n: (abs(n - h_id), n))
    by_dist = sorted(pool, key=lambda n: (planar_distance(graph.node(n).pose, h.pose), n))
    rank = {n: i for i, n in enumerate(by_id)}
    for i, n in enumerate(by_dist):
        rank[n] += i
    return sorted(pool, key=lambda n: (rank[n], n))[:k1]


def _retrieve_u3(state: MemoryState, graph: MapGraph, regions: RegionSet,
                 budget: int) -> list[int]:
    """Up to budget LTM nodes from the most probable regions.

    Regions are visited by descending fused probability (ties by lower id);
    within a region, members closest to the cluster centroid come back
    first. Leftover budget spills into the next region. Regions with zero
    fused probability are never preselected.

    Candidates come from a fixed-width shortlist of the highest-probability
    regions (argpartition, linear in region count at C speed) so the update
    cost stays flat as the map grows.
    """
    if budget <= 0 or len(state.ema) == 0:
        return []
    p = state.ema.p
    shortlist = min(p.shape[0], max(4 * budget, 16))
    if shortlist < p.shape[0]:
        idx = np.argpartition(-p, shortlist - 1)[:shortlist]
    else:
        idx = np.arange(p.shape[0])
    order = sorted(idx.tolist(), key=lambda r: (-p[r], r))
    out: list[int] = []
    for rid in order:
        if len(out) >= budget or p[rid] <= 0.0:
            break
        members = state.ltm_regions.get(rid)
        if not members:
            continue
        cluster = regions.clusters.get(rid)
        if cluster is not None:
            cx, cy = cluster.centroid
        else:
            cx, cy = 0.0, 0.0

        def key(n: int, cx=cx, cy=cy):
            pose = graph.node(n).pose
            return (math.hypot(pose.x - cx, pose.y - cy), n)

        take = heapq.nsmallest(budget - len(out), members, key=key)
        out.extend(take)
    return out


def wm_update(state: MemoryState, graph: MapGraph, regions: RegionSet,
              v_id: int, probs=None) -> UpdateEvents:
    """Run one transfer-retrieval cycle for the current node v.

    probs is the per-region confidence vector for v's feature (None when no
    predictor is available, which disables fusion and region retrieval and
    leaves transfer ordering to recency alone).
    """
    if v_id not in state:
        raise DataError(f"node {v_id} was never inserted")
    params = state.params
    state.step += 1
    ev = UpdateEvents(step=state.step, node_id=v_id)
    use_regions = params.policy == POLICY_REGION and probs is not None

    hyp = best_hypothesis(state, graph, v_id)
    if hyp is not None:
        ev.hypothesis_id, ev.hypothesis_score = hyp
        ev.loop_closed = ev.hypothesis_score >= params.tau_loop

    if ev.loop_closed:
        h_id = ev.hypothesis_id
        if not graph.has_edge(v_id, h_id):
            graph.add_edge(v_id, h_id, LOOP_CLOSURE)
        state.wm[h_id] = state.step
        for nid in _retrieve_u1(state, graph, h_id):
            state._ltm_remove(graph, nid)
            state.wm[nid] = state.step
            ev.retrieved_u1.append(nid)

    v = graph.node(v_id)
    u2 = heapq.nsmallest(
        params.k2, state.wm,
        key=lambda n: (abs(graph.node(n).timestamp - v.timestamp), n))
    immune = set(ev.retrieved_u1) | set(u2)
    ev.immunized = sorted(immune)

    if use_regions:
        p = ema_update(state.ema, probs)
        ev.top_regions = top_k(p, 3) if p.size else []
        for nid in _retrieve_u3(state, graph, regions, params.k3):
            state._ltm_remove(graph, nid)
            state.wm[nid] = state.step
            ev.retrieved_u3.append(nid)

    excess = len(state.wm) - params.n_wm
    if excess > 0:
        victims = [n for n in state.wm if n not in immune]
        if params.policy == POLICY_REGION:
            victims.sort(key=lambda n: (
                state.region_probability(graph, n), state.wm[n], n))
        else:
            victims.sort(key=lambda n: (state.wm[n], n))
        if len(victims) < excess:
            ev.overflowed = True
        for worst in victims[:excess]:
            del state.wm[worst]
            state._ltm_add(graph, worst)
            ev.transferred.append(worst)

    ev.wm_size = len(state.wm)
    return ev
