"""Scoring a run against trajectory ground truth.

Ground truth for place recognition comes from poses alone: frame v revisits
frame u when they are close in position and heading but far apart in the
sequence (or in different sessions), so the match could not have come from
plain odometry. Consecutive matched frames coalesce into one revisit event;
detection is scored per event, since reporting a loop on any frame of a
pass through a known place counts as recognizing it.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from scipy.spatial import cKDTree

from .errors import DataError
from .geometry import angle_diff, planar_distance


@dataclass(frozen=True)
class GtThresholds:
    """Revisit criteria: position and heading gates plus an id-gap window."""

    d_max: float = 3.0
    theta_max: float = math.pi / 4.0
    window: int = 20

    def __post_init__(self):
        if self.d_max <= 0:
            raise DataError("d_max must be positive")
        if not 0 < self.theta_max <= math.pi:
            raise DataError("theta_max must lie in (0, pi]")
        if self.window < 0:
            raise DataError("window must be >= 0")


@dataclass
class GtEvent:
    """One maximal run of consecutive frames that revisit a known place."""

    start: int
    end: int
    counterparts: dict[int, int] = field(default_factory=dict)


def _eligible(i: int, j: int, window: int, boundary: int | None) -> bool:
    if boundary is None:
        return i - j > window
    return i >= boundary > j


def gt_matches(frames, thresholds: GtThresholds, boundary: int | None = None) -> list[GtEvent]:
    """Coalesced revisit events for a run, by frame index.

    With boundary set, only frames at or past it are queries and only frames
    before it are counterparts (cross-session relocalization); otherwise any
    pair further apart than the window qualifies.
    """
    if not frames:
        return []
    positions = [(f.pose.x, f.pose.y) for f in frames]
    tree = cKDTree(positions)
    matched: dict[int, int] = {}
    for i, f in enumerate(frames):
        if boundary is not None and i < boundary:
            continue
        best = None
        for j in tree.query_ball_point(positions[i], thresholds.d_max):
            if j >= i or not _eligible(i, j, thresholds.window, boundary):
                continue
            d = planar_distance(f.pose, frames[j].pose)
            if d >= thresholds.d_max or angle_diff(f.pose, frames[j].pose) >= thresholds.theta_max:
                continue
            if best is None or d < best[0]:
                best = (d, j)
        if best is not None:
            matched[i] = best[1]

    events: list[GtEvent] = []
    for i in sorted(matched):
        if events and i == events[-1].end + 1:
            events[-1].end = i
            events[-1].counterparts[i] = matched[i]
        else:
            events.append(GtEvent(i, i, {i: matched[i]}))
    return events


@dataclass
class LoopEval:
    total: int
    detected: int
    false_positives: int
    hits: list[bool]

    def __post_init__(self):
        if self.detected > self.total:
            raise DataError("detected events exceed ground-truth events")


def eval_loops(events, records, frames, thresholds: GtThresholds,
               boundary: int | None = None) -> LoopEval:
    """Score loop-closure records against ground-truth revisit events.

    A record detects an event when its node lies inside the event's frame
    range, the declared match is positionally within d_max of the node, and
    the match is far enough away in the sequence (past the window, or across
    the session boundary) that odometry alone could not explain it. Closures
    that fail the position gate count as false positives.
    """
    correct_nodes: set[int] = set()
    false_positives = 0
    for r in records:
        if not r.loop_closed or r.hypothesis_id is None:
            continue
        v, h = r.node_id, r.hypothesis_id
        ok = (_eligible(v, h, thresholds.window, boundary)
              and planar_distance(frames[v].pose, frames[h].pose) < thresholds.d_max)
        if ok:
            correct_nodes.add(v)
        else:
            false_positives += 1
    hits = [any(e.start <= v <= e.end for v in correct_nodes) for e in events]
    return LoopEval(len(events), sum(hits), false_positives, hits)


@dataclass(frozen=True)
class RegionPairing:
    """Injective assignment of cluster regions to generating zones."""

    region_to_zone: dict

    def zone_of(self, region: int):
        return self.region_to_zone.get(region)


def build_pairing(regions, zones) -> RegionPairing:
    """Greedy co-occurrence pairing, largest overlap first, ties by lower ids.

    regions and zones are parallel per-frame labels; frames with region None
    are skipped. Each region maps to at most one zone and vice versa.
    """
    if len(regions) != len(zones):
        raise DataError("regions and zones must be parallel")
    counts = Counter((r, z) for r, z in zip(regions, zones) if r is not None)
    taken_r: set = set()
    taken_z: set = set()
    mapping: dict = {}
    for (r, z), _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])):
        if r in taken_r or z in taken_z:
            continue
        mapping[r] = z
        taken_r.add(r)
        taken_z.add(z)
    return RegionPairing(mapping)


@dataclass
class TopkEval:
    top1: float
    top3: float
    counted: int

    def __post_init__(self):
        if self.top3 < self.top1 - 1e-12:
            raise DataError("top-3 accuracy below top-1")


def eval_topk(prob_rows, zones, pairing: RegionPairing | None = None) -> TopkEval:
    """Top-1 / top-3 zone accuracy of per-frame probability vectors.

    Region indices pass through the pairing when given (unpaired regions can
    never be correct); without a pairing, region index == zone label.
    """
    from .predictor import top_k

    if len(prob_rows) != len(zones):
        raise DataError("probabilities and zones must be parallel")
    if not prob_rows:
        raise DataError("nothing to score")
    hit1 = hit3 = 0
    for p, z in zip(prob_rows, zones):
        ranked = top_k(p, 3)
        if pairing is not None:
            ranked = [pairing.zone_of(r) for r in ranked]
        if ranked and ranked[0] == z:
            hit1 += 1
        if z in ranked:
            hit3 += 1
    n = len(prob_rows)
    return TopkEval(hit1 / n, hit3 / n, n)


@dataclass
class RunReport:
    """Everything the report path prints for one evaluated run."""

    policy: str
    frames: int
    loop: LoopEval | None = None
    topk: TopkEval | None = None
    mean_latency_us: float = 0.0

    def to_dict(self) -> dict:
        # Timings stay out of the dict so repeated runs on the same inputs
        # serialize byte-identically; latency is reported separately.
        out: dict = {"policy": self.policy, "frames": self.frames}
        if self.loop is not None:
            out["events_total"] = self.loop.total
            out["events_detected"] = self.loop.detected
            out["false_positives"] = self.loop.false_positives
        if self.topk is not None:
            out["top1"] = round(self.topk.top1, 6)
            out["top3"] = round(self.topk.top3, 6)
        return out
