"""Acceptance gate: one test per headline property, one verdict line each.

Fixtures are hand-built so every expected outcome is derivable by eye:
grids with planted revisit passes, a two-session tour with return arcs,
and re-drive sequences that keep loop closures firing while maps grow.
"""

import gc
import math
import os
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from regionmem import (
    ClusteringParams,
    EmaState,
    Frame,
    GtThresholds,
    MapGraph,
    MemoryParams,
    MemoryState,
    ModelPredictor,
    OraclePredictor,
    PredictorModel,
    RegionSet,
    TrainConfig,
    build_dataset,
    ema_update,
    eval_loops,
    eval_topk,
    forward,
    gt_matches,
    insert_new_node,
    on_new_node,
    replay,
    train,
    wm_update,
)
from regionmem.predictor import _batch_loss_grads

sys.path.insert(0, os.path.dirname(__file__))


def _verdict(capsys, name, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def unit(v):
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# Fixture builders


def zone_frames(specs, n_zones, dim, seed, seq_of=None):
    """Frames from (x, y, yaw, zone) tuples with one-hot zone archetypes.

    Orthogonal archetypes keep cross-zone similarity near 0.5 and same-zone
    similarity near 1.0 by construction, so loop-closure outcomes depend on
    the memory policy rather than on a lucky feature draw.
    """
    assert n_zones <= dim
    rng = np.random.default_rng(seed)
    arch = np.eye(dim)[:n_zones]
    frames = []
    for i, (x, y, yaw, zone) in enumerate(specs):
        feat = unit(arch[zone] + 0.03 * rng.normal(size=dim))
        seq = seq_of(i) if seq_of else "survey"
        frames.append(Frame(seq=seq, id=i, t=float(i),
                            pose=__import__("regionmem").geometry.Pose2(
                                float(x), float(y), float(yaw)),
                            feature=feat))
    return frames


def build_survey_fixture():
    """Lawnmower grid, then 5 excursions each re-driving one old row segment.

    Rows sit 4 m apart (past the 3 m position gate) so the grid itself has
    no revisits; each excursion covers 60 frames of fresh terrain, pushing
    every previously mapped node out of a 50-slot recency working set, then
    re-drives 12 frames of a row in its original direction. Ground truth is
    exactly 5 revisit events.
    """
    rows, row_len, blocks = 7, 40, 8
    specs = []
    for r in range(rows):
        xs = range(row_len) if r % 2 == 0 else range(row_len - 1, -1, -1)
        yaw = 0.0 if r % 2 == 0 else math.pi
        for x in xs:
            specs.append((x, 4.0 * r, yaw, r * blocks + x // 5))
    mapped = len(specs)
    for i in range(5):
        lane = -12.0 - 8.0 * i
        for x in range(60):
            specs.append((x, lane, 0.0, 56 + i))
        r = i + 1
        xs = range(14, 26) if r % 2 == 0 else range(25, 13, -1)
        yaw = 0.0 if r % 2 == 0 else math.pi
        for x in xs:
            specs.append((x, 4.0 * r, yaw, r * blocks + x // 5))
    return zone_frames(specs, 61, 64, seed=0), mapped


def build_tour_fixture():
    """A closed tour, then a second session returning via 3 disjoint arcs.

    Session one drives a 360-frame circle (1 m steps). Session two starts in
    fresh terrain, then re-drives three 15-frame arcs of the circle at the
    90, 180 and 270 degree marks, with 60 fresh frames before each so the
    carried-over working memory has fully turned over for a recency policy.
    """
    n_circle, sector = 360, 8
    radius = n_circle / (2.0 * math.pi)
    specs = []
    for i in range(n_circle):
        theta = 2.0 * math.pi * i / n_circle
        specs.append((radius * math.cos(theta), radius * math.sin(theta),
                      (theta + math.pi / 2.0) % (2.0 * math.pi), i // sector))
    boundary = len(specs)
    for j, start in enumerate((90, 180, 270)):
        lane = -radius - 20.0 - 8.0 * j
        for x in range(60):
            specs.append((x, lane, 0.0, 45 + j))
        for i in range(start, start + 15):
            theta = 2.0 * math.pi * i / n_circle
            specs.append((radius * math.cos(theta), radius * math.sin(theta),
                          (theta + math.pi / 2.0) % (2.0 * math.pi), i // sector))
    frames = zone_frames(specs, 48, 64, seed=1,
                         seq_of=lambda i: "tour" if i < boundary else "return")
    return frames, boundary


def build_redrive_fixture(n_frames, seed):
    """Rows driven twice in a row: loop closures keep firing as the map grows."""
    specs = []
    k = 0
    while len(specs) < n_frames:
        for _ in range(2):
            for x in range(50):
                if len(specs) >= n_frames:
                    break
                specs.append((x, 3.0 * k, 0.0, k % 128))
        k += 1
    return zone_frames(specs, 128, 128, seed=seed)


SPEC_MEM = dict(n_wm=50, k1=2, k2_frac=0.25)


# ---------------------------------------------------------------------------
# Criteria


def test_large_loop_detection_gap(capsys):
    t0 = time.monotonic()
    frames, mapped = build_survey_fixture()
    th = GtThresholds()
    events = gt_matches(frames, th)
    assert len(events) == 5
    mem = MemoryParams(**SPEC_MEM)
    clu = ClusteringParams()

    base_map = replay(frames[:mapped], mem, clu)
    oracle = OraclePredictor(base_map)
    got = {}
    got["oracle"] = eval_loops(events, replay(frames, mem, clu, oracle).events,
                               frames, th).detected

    dataset = build_dataset(base_map)
    model = PredictorModel.initialize(d_in=64, hidden=64, seed=0,
                                      n_regions=max(r for _, r in dataset) + 1)
    model, _ = train(model, dataset, TrainConfig(epochs=100, seed=0))
    got["trained"] = eval_loops(events, replay(frames, mem, clu,
                                               ModelPredictor(model)).events,
                                frames, th).detected

    baseline = MemoryParams(policy="baseline", **SPEC_MEM)
    got["baseline"] = eval_loops(events, replay(frames, baseline, clu).events,
                                 frames, th).detected

    elapsed = time.monotonic() - t0
    ok = (got["oracle"] == 5 and got["trained"] >= 4 and got["baseline"] <= 2
          and elapsed < 30.0)
    _verdict(capsys, "large-loop detection gap", ok,
             f"region+oracle {got['oracle']}/5, region+trained "
             f"{got['trained']}/5, baseline {got['baseline']}/5 "
             f"({elapsed:.1f}s < 30s)")


def test_relocalization_gap(capsys):
    frames, boundary = build_tour_fixture()
    th = GtThresholds()
    events = gt_matches(frames, th, boundary=boundary)
    assert len(events) == 3
    mem = MemoryParams(**SPEC_MEM)
    clu = ClusteringParams()

    oracle = OraclePredictor(replay(frames[:boundary], mem, clu))
    region = eval_loops(events, replay(frames, mem, clu, oracle).events,
                        frames, th, boundary=boundary).detected
    baseline = eval_loops(
        events,
        replay(frames, MemoryParams(policy="baseline", **SPEC_MEM), clu).events,
        frames, th, boundary=boundary).detected

    ok = region == 3 and baseline <= 1
    _verdict(capsys, "relocalization gap", ok,
             f"region+oracle {region}/3, baseline {baseline}/3")


def test_constant_cost_updates(capsys):
    t0 = time.monotonic()
    mem = MemoryParams(**SPEC_MEM)
    clu = ClusteringParams()
    means = {}
    for n in (1000, 10000):
        frames = build_redrive_fixture(n, seed=5)
        oracle = OraclePredictor(replay(frames, mem, clu))
        gc.collect()
        gc.disable()
        try:
            log = replay(frames, mem, clu, oracle)
        finally:
            gc.enable()
        assert sum(1 for ev in log.events if ev.loop_closed) > n // 4
        means[n] = float(np.mean(log.latencies_us[-200:]))
    elapsed = time.monotonic() - t0
    ratio = means[10000] / means[1000]
    ok = ratio <= 2.0 and elapsed < 120.0
    _verdict(capsys, "constant-cost updates", ok,
             f"mean update latency last 200 frames: {means[1000]:.0f}us @1k "
             f"vs {means[10000]:.0f}us @10k, ratio {ratio:.2f} <= 2.0 "
             f"({elapsed:.0f}s < 120s)")


def _region_score(graph, members, params):
    n = len(members)
    xs = [graph.node(m).pose.x for m in members]
    ys = [graph.node(m).pose.y for m in members]
    cx, cy = sum(xs) / n, sum(ys) / n
    if n == 1:
        return params.s_prime, (cx, cy), 0.0
    sum_sq = sum((x - cx) ** 2 + (y - cy) ** 2 for x, y in zip(xs, ys))
    req = params.r_max * min(1.0, math.sqrt(n / params.n_des))
    return params.s_prime + sum_sq / req, (cx, cy), sum_sq


def _connected(graph, members):
    if not members:
        return True
    start = next(iter(members))
    seen = {start}
    stack = [start]
    while stack:
        for nb in graph.neighbors(stack.pop()):
            if nb in members and nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(members)


def _check_clusters(graph, regions, params, rids, violations, where):
    for rid in rids:
        cluster = regions.clusters.get(rid)
        if cluster is None:
            continue
        score, (cx, cy), sum_sq = _region_score(graph, cluster.members, params)
        if not (math.isclose(cluster.cx, cx, rel_tol=1e-6, abs_tol=1e-9)
                and math.isclose(cluster.cy, cy, rel_tol=1e-6, abs_tol=1e-9)
                and math.isclose(cluster.sum_sq, sum_sq, rel_tol=1e-6, abs_tol=1e-9)):
            violations.append(f"{where}: cache drift in region {rid}")
        if not _connected(graph, cluster.members):
            violations.append(f"{where}: region {rid} disconnected")


def _check_partition(graph, regions, mirror, violations, where):
    seen = set()
    for rid, cluster in regions.clusters.items():
        if cluster.members != mirror.get(rid, set()):
            violations.append(f"{where}: membership mirror diverged at {rid}")
        if seen & cluster.members:
            violations.append(f"{where}: overlapping regions")
        seen |= cluster.members
        for m in cluster.members:
            if regions.node_to_region.get(m) != rid or graph.node(m).region != rid:
                violations.append(f"{where}: label mismatch for node {m}")
    if seen != set(range(len(graph))):
        violations.append(f"{where}: partition does not cover all nodes")


def _run_clustering_fixture(seed, n, params, violations):
    rng = np.random.default_rng(seed)
    graph = MapGraph()
    regions = RegionSet()
    mirror: dict[int, set[int]] = {}
    feat = np.array([1.0, 0.0])
    x = y = 0.0
    reassigns = 0
    for i in range(n):
        x += rng.normal(0.0, 0.8)
        y += rng.normal(0.0, 0.8)
        nid = graph.add_node((x, y, 0.0), float(i), feat)
        if nid > 0 and nid % 31 == 0:
            graph.add_edge(nid, int(rng.integers(0, nid)))
        changes = on_new_node(regions, graph, nid, params)
        touched = set()
        for ch in changes:
            if ch.kind == "assign":
                mirror.setdefault(ch.to_region, set()).add(ch.node)
                touched.add(ch.to_region)
                continue
            reassigns += 1
            involved = [r for r in (ch.from_region, ch.to_region) if r in mirror]
            before = sum(_region_score(graph, mirror[r], params)[0]
                         for r in involved if mirror[r])
            mirror[ch.from_region].discard(ch.node)
            if not mirror[ch.from_region]:
                del mirror[ch.from_region]
            mirror.setdefault(ch.to_region, set()).add(ch.node)
            involved = [r for r in (ch.from_region, ch.to_region) if r in mirror]
            after = sum(_region_score(graph, mirror[r], params)[0]
                        for r in involved if mirror[r])
            if not after < before:
                violations.append(
                    f"seed {seed} step {i}: reassignment raised dispersion "
                    f"({before:.9f} -> {after:.9f})")
            touched.update({ch.from_region, ch.to_region})
        _check_clusters(graph, regions, params, touched, violations,
                        f"seed {seed} step {i}")
        if i % 250 == 249 or i == n - 1:
            _check_clusters(graph, regions, params, list(regions.clusters),
                            violations, f"seed {seed} sweep {i}")
            _check_partition(graph, regions, mirror, violations,
                             f"seed {seed} sweep {i}")
    return reassigns


def test_clustering_invariants(capsys):
    params = ClusteringParams()
    sizes = [(s, 100 + 13 * s) for s in range(46)]
    sizes += [(100, 1200), (101, 1500), (102, 1800), (103, 2000)]
    violations: list[str] = []
    total_nodes = 0
    total_reassigns = 0
    for seed, n in sizes:
        total_nodes += n
        total_reassigns += _run_clustering_fixture(seed, n, params, violations)
    ok = not violations and total_reassigns > 0
    head = violations[0] if violations else "none"
    _verdict(capsys, "clustering invariants", ok,
             f"{len(sizes)} fixtures, {total_nodes} nodes, "
             f"{total_reassigns} reassignments, violations: "
             f"{len(violations)} ({head})")


def test_predictor_correctness(capsys):
    from test_predictor import finite_difference_grads, max_rel_error

    # Gradients against central finite differences on 100 random models.
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        model = PredictorModel.initialize(d_in=8, n_regions=4, hidden=6, seed=seed)
        gamma = (0.0, 0.5, 2.0)[seed % 3]
        for _ in range(20):
            x = rng.normal(0.0, 0.7, size=(5, 8))
            targets = rng.integers(0, 4, size=5)
            z1 = x @ model.w1.T + model.b1
            if np.abs(z1).min() > 1e-3:
                break
        analytic = _batch_loss_grads(model, x, targets, gamma, 1e-7)[1]
        numeric = finite_difference_grads(model, x, targets, gamma, 1e-7)
        worst = max(worst, max_rel_error(analytic, numeric))
    grads_ok = worst < 1e-4

    # A single example is driven essentially to zero loss.
    model = PredictorModel.initialize(d_in=8, n_regions=4, hidden=6, seed=0)
    sample = unit(np.arange(1.0, 9.0))
    fitted, losses = train(model, [(sample, 2)],
                           TrainConfig(epochs=500, step_size=0.1, seed=0))
    overfit_ok = losses[-1] < 0.01
    assert np.argmax(forward(fitted, sample)) == 2

    # Fused probabilities follow the exact contraction recurrence.
    state = EmaState(alpha=0.5)
    exact = None
    dyadic_ok = True
    rng = np.random.default_rng(3)
    for _ in range(64):
        obs = rng.integers(0, 1024, size=4) / 1024.0
        fused = ema_update(state, obs)
        exact = obs if exact is None else 0.5 * obs + 0.5 * exact
        dyadic_ok &= bool(np.array_equal(fused, exact))
    state = EmaState(alpha=0.3)
    ratios = None
    rational_ok = True
    for _ in range(300):
        obs = rng.integers(0, 1000, size=3) / 1000.0
        fused = ema_update(state, obs)
        fr = [Fraction(int(o * 1000), 1000) for o in obs]
        if ratios is None:
            ratios = fr
        else:
            ratios = [Fraction(3, 10) * o + Fraction(7, 10) * p
                      for o, p in zip(fr, ratios)]
        rational_ok &= bool(np.allclose(fused, [float(r) for r in ratios],
                                        rtol=1e-12, atol=0.0))
    ema_ok = dyadic_ok and rational_ok

    # Separable 8-region data: near-perfect ranking accuracy.
    rng = np.random.default_rng(0)
    arch = np.eye(16)[:8]
    train_set = [(unit(arch[z] + 0.05 * rng.normal(size=16)), z)
                 for z in range(8) for _ in range(40)]
    test_set = [(unit(arch[z] + 0.05 * rng.normal(size=16)), z)
                for z in range(8) for _ in range(20)]
    model = PredictorModel.initialize(d_in=16, n_regions=8, hidden=64, seed=0)
    model, _ = train(model, train_set, TrainConfig(epochs=150, seed=0))
    rows = [forward(model, f) for f, _ in test_set]
    topk = eval_topk(rows, [z for _, z in test_set])
    sep_ok = topk.top1 >= 0.9 and topk.top3 >= 0.99 and topk.top3 >= topk.top1

    ok = grads_ok and overfit_ok and ema_ok and sep_ok
    _verdict(capsys, "predictor correctness", ok,
             f"grad max rel err {worst:.2e} < 1e-4, overfit loss "
             f"{losses[-1]:.4f} < 0.01, fused-probability recurrence exact, "
             f"separable top1 {topk.top1:.3f} / top3 {topk.top3:.3f}")


def test_transfer_retrieval_golden_trace(capsys):
    from test_memory import TestGoldenTrace

    graph, _, state, ev = TestGoldenTrace().run_trace()
    trace_ok = (
        [e.retrieved_u1 for e in ev] == [[], [], [], [], [], [0], [1]]
        and [e.retrieved_u3 for e in ev] == [[], [], [], [], [], [], [2]]
        and [e.transferred for e in ev] == [[], [], [], [], [0], [2, 1], [2, 3, 4]]
        and [e.loop_closed for e in ev] == [False, False, False, True, False,
                                            True, True])
    # Update 2: the only working-memory node is immunized, so nothing moves.
    all_immunized_ok = (ev[1].transferred == [] and ev[1].wm_size == 1
                        and len(ev[1].immunized) == 1)

    leaked = 0
    updates = 0
    for policy, seed, steps in (("region", 21, 5000), ("baseline", 22, 5000)):
        params = MemoryParams(n_wm=14, k1=2, k2_frac=0.25, m_stm=4,
                              tau_loop=0.9, policy=policy)
        clu = ClusteringParams()
        rng = np.random.default_rng(seed)
        arch = rng.normal(size=(8, 8))
        arch /= np.linalg.norm(arch, axis=1, keepdims=True)
        g, regions, mem = MapGraph(), RegionSet(), MemoryState(params)
        x = y = 0.0
        for i in range(steps):
            x += rng.normal(0.0, 1.0)
            y += rng.normal(0.0, 1.0)
            feat = arch[int(rng.integers(0, 8))] + 0.05 * rng.normal(size=8)
            nid = g.add_node((x, y, 0.0), float(i), feat)
            insert_new_node(mem, g, nid)
            for ch in on_new_node(regions, g, nid, clu):
                if ch.kind == "reassign":
                    mem.note_region_change(ch.node, ch.from_region, ch.to_region)
            probs = rng.random(regions._next_id) if policy == "region" else None
            e = wm_update(mem, g, regions, nid, probs)
            updates += 1
            if set(e.transferred) & set(e.immunized):
                leaked += 1
            assert e.wm_size <= params.n_wm

    ok = trace_ok and all_immunized_ok and leaked == 0 and updates == 10000
    _verdict(capsys, "transfer-retrieval golden trace", ok,
             f"hand trace exact, all-immunized update transfers nothing, "
             f"immunized leaks {leaked}/{updates} randomized updates")
