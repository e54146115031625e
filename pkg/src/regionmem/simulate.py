"""Frame-by-frame replay of a sequence through the full pipeline.

Each frame becomes a graph node, joins the incremental clustering, and then
drives one memory update. A change of the frame's seq field is a session
break: the odometry chain is cut and short-term memory flushes to long-term
while working memory carries over, which is the relocalization setting.

Predictors are plain callables frame -> probability vector (or None to run
without region confidences). The oracle predictor answers from the true
pose against a finished mapping run and exists to upper-bound what a
learned model can contribute.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .clustering import ClusteringParams, RegionSet, on_new_node
from .errors import DataError
from .mapgraph import MapGraph
from .memory import MemoryParams, MemoryState, UpdateEvents, insert_new_node, wm_update
from .predictor import PredictorModel, forward


@dataclass
class RunLog:
    """A finished replay: the built map plus per-frame events and timings."""

    graph: MapGraph
    regions: RegionSet
    memory: MemoryState
    frames: list
    events: list[UpdateEvents] = field(default_factory=list)
    latencies_us: list[float] = field(default_factory=list)
    session_starts: list[int] = field(default_factory=list)


def replay(frames, mem_params: MemoryParams, cluster_params: ClusteringParams,
           predictor=None) -> RunLog:
    """Run every frame through insertion, clustering and the memory update."""
    if not frames:
        raise DataError("no frames to replay")
    graph = MapGraph()
    regions = RegionSet()
    memory = MemoryState(mem_params)
    log = RunLog(graph, regions, memory, list(frames))
    prev_seq = None
    for frame in frames:
        if prev_seq is not None and frame.seq != prev_seq:
            memory.start_new_session(graph)
            log.session_starts.append(len(graph))
        prev_seq = frame.seq
        nid = graph.add_node(frame.pose, frame.t, frame.feature)
        insert_new_node(memory, graph, nid)
        for change in on_new_node(regions, graph, nid, cluster_params):
            if change.kind == "reassign":
                memory.note_region_change(change.node, change.from_region,
                                          change.to_region)
        probs = predictor(frame) if predictor is not None else None
        start = time.perf_counter_ns()
        ev = wm_update(memory, graph, regions, nid, probs)
        log.latencies_us.append((time.perf_counter_ns() - start) / 1000.0)
        log.events.append(ev)
    return log


def build_dataset(log: RunLog, upto: int | None = None):
    """(feature, region) pairs from a mapping run, for predictor training.

    Region labels are read after the whole run so late reassignments are
    reflected. Nodes that never joined a region are skipped.
    """
    end = len(log.graph) if upto is None else upto
    out = []
    for nid in range(end):
        node = log.graph.node(nid)
        if node.region is not None:
            out.append((node.feature, node.region))
    if not out:
        raise DataError("mapping run produced no labeled nodes")
    return out


class OraclePredictor:
    """One-hot region confidence from the true pose, via the finished map.

    Looks up the mapped node nearest to the query frame's position and
    claims its region with full confidence. This is the ceiling for any
    feature-based predictor on the same map.
    """

    def __init__(self, log: RunLog):
        nodes = [log.graph.node(i) for i in range(len(log.graph))]
        labeled = [n for n in nodes if n.region is not None]
        if not labeled:
            raise DataError("oracle needs a mapped run with regions")
        self._tree = cKDTree([(n.pose.x, n.pose.y) for n in labeled])
        self._labels = np.asarray([n.region for n in labeled])
        self.n_regions = int(self._labels.max()) + 1

    def __call__(self, frame) -> np.ndarray:
        _, idx = self._tree.query((frame.pose.x, frame.pose.y))
        probs = np.zeros(self.n_regions)
        probs[self._labels[idx]] = 1.0
        return probs


class ModelPredictor:
    """Learned region confidences from the frame's feature vector."""

    def __init__(self, model: PredictorModel):
        self.model = model
        self.n_regions = model.n_regions

    def __call__(self, frame) -> np.ndarray:
        return forward(self.model, frame.feature)
