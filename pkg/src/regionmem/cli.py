"""Command-line interface.

Commands cover the whole workflow: generate or ingest a sequence, map it,
train the region predictor, replay under a memory policy, evaluate against
ground truth, and render figures from the delimited outputs. All CSV and
JSON outputs are deterministic for identical inputs; timing measurements go
to their own file since they never can be.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 unexpected
failure.
"""

from __future__ import annotations

import csv
import functools
import json
import sys
from pathlib import Path

import click

from . import config as cfgmod
from .clustering import cluster_rows
from .errors import ConfigError, DataError
from .evaluate import GtThresholds, RunReport, eval_loops, gt_matches
from .memory import UpdateEvents
from .predictor import PredictorModel, load_model, save_model, train
from .sequences import LAYOUTS, gen_synthetic, load_sequence, write_sequence
from .simulate import ModelPredictor, OraclePredictor, RunLog, build_dataset, replay

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"configuration error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except DataError as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA)
        except click.exceptions.Exit:
            raise
        except Exception as exc:
            click.echo(f"internal error: {exc!r}", err=True)
            sys.exit(EXIT_INTERNAL)
    return wrapper


def _load_cfg(ctx, extra: dict | None = None) -> dict:
    overrides = dict(ctx.obj.get("overrides", {}))
    overrides.update(extra or {})
    return cfgmod.load_config(ctx.obj.get("config"), overrides)


def write_events(path, events: list[UpdateEvents]):
    """One JSON object per memory update, deterministic for equal inputs."""
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            rec = {
                "step": ev.step,
                "node_id": ev.node_id,
                "hypothesis_id": ev.hypothesis_id,
                "hypothesis_score": round(ev.hypothesis_score, 9),
                "loop_closed": ev.loop_closed,
                "retrieved_u1": ev.retrieved_u1,
                "retrieved_u3": ev.retrieved_u3,
                "transferred": ev.transferred,
                "wm_size": ev.wm_size,
                "top_regions": ev.top_regions,
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def load_events(path) -> list[UpdateEvents]:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rec = json.loads(line)
                events.append(UpdateEvents(
                    step=rec["step"], node_id=rec["node_id"],
                    hypothesis_id=rec["hypothesis_id"],
                    hypothesis_score=rec["hypothesis_score"],
                    loop_closed=rec["loop_closed"],
                    retrieved_u1=rec["retrieved_u1"],
                    retrieved_u3=rec["retrieved_u3"],
                    transferred=rec["transferred"],
                    wm_size=rec["wm_size"],
                    top_regions=rec["top_regions"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}: line {lineno}: bad event record ({exc})") from exc
    if not events:
        raise DataError(f"{path}: no events")
    return events


def _write_clusters(path, log: RunLog):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "x", "y", "region_id"])
        for nid, x, y, rid in cluster_rows(log.regions, log.graph):
            writer.writerow([nid, f"{x:.9g}", f"{y:.9g}", rid])


def _write_latency(path, log: RunLog):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "latency_us"])
        for ev, lat in zip(log.events, log.latencies_us):
            writer.writerow([ev.step, f"{lat:.3f}"])


def _run_outputs(out_dir: Path, log: RunLog):
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_clusters(out_dir / "clusters.csv", log)
    write_events(out_dir / "events.jsonl", log.events)
    _write_latency(out_dir / "latency.csv", log)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Config file with key = value lines.")
@click.option("--seed", type=int, default=None, help="Override the run seed.")
@click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
              help="Override any config key (repeatable).")
@click.pass_context
def main(ctx, config_path, seed, sets):
    """Region-directed working-memory management for pose-graph maps."""
    overrides: dict = {}
    for item in sets:
        if "=" not in item:
            raise click.UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    if seed is not None:
        overrides["seed"] = seed
    ctx.obj = {"config": config_path, "overrides": overrides}


@main.command("gen-synthetic")
@click.option("--layout", type=click.Choice(LAYOUTS), default="grid", show_default=True)
@click.option("--frames", "n", type=int, default=400, show_default=True)
@click.option("--dim", type=int, default=16, show_default=True)
@click.option("--zones", type=int, default=8, show_default=True)
@click.option("--noise", type=float, default=0.05, show_default=True)
@click.option("--step", type=float, default=1.0, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="Sequence JSONL path.")
@click.option("--labels", type=click.Path(), default=None,
              help="Optional CSV of generating zone per frame.")
@click.pass_context
@_guard
def gen_synthetic_cmd(ctx, layout, n, dim, zones, noise, step, out, labels):
    """Generate a synthetic sequence with zone-archetype features."""
    cfg = _load_cfg(ctx)
    frames, zone_labels = gen_synthetic(layout, n, cfg["seed"], dim=dim,
                                        zones=zones, noise=noise, step=step)
    write_sequence(out, frames, header=f"synthetic {layout} layout, {zones} zones")
    if labels:
        with open(labels, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "zone"])
            for f, z in zip(frames, zone_labels):
                writer.writerow([f.id, z])
    click.echo(f"wrote {len(frames)} frames to {out}")


@main.command("explore")
@click.option("--sequence", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.pass_context
@_guard
def explore_cmd(ctx, sequence, out_dir):
    """Map a sequence: cluster it and run the memory without a predictor."""
    cfg = _load_cfg(ctx)
    frames = load_sequence(sequence)
    log = replay(frames, cfgmod.memory_params(cfg), cfgmod.cluster_params(cfg))
    _run_outputs(Path(out_dir), log)
    click.echo(f"mapped {len(frames)} frames into "
               f"{len(log.regions.clusters)} regions; outputs in {out_dir}")


@main.command("train")
@click.option("--sequence", type=click.Path(exists=True), required=True)
@click.option("--model-out", type=click.Path(), required=True)
@click.option("--history", type=click.Path(), default=None,
              help="Optional CSV of per-epoch mean loss.")
@click.pass_context
@_guard
def train_cmd(ctx, sequence, model_out, history):
    """Map a sequence, then fit the region predictor on its clustering."""
    cfg = _load_cfg(ctx)
    frames = load_sequence(sequence)
    log = replay(frames, cfgmod.memory_params(cfg), cfgmod.cluster_params(cfg))
    dataset = build_dataset(log)
    n_regions = max(r for _, r in dataset) + 1
    model = PredictorModel.initialize(
        d_in=log.graph.feature_dim, n_regions=n_regions,
        hidden=cfg["train.hidden"], seed=cfg["seed"])
    model, losses = train(model, dataset, cfgmod.train_config(cfg))
    save_model(model, model_out)
    if history:
        with open(history, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss"])
            for i, loss in enumerate(losses):
                writer.writerow([i, f"{loss:.9g}"])
    final = f"{losses[-1]:.4f}" if losses else "n/a"
    click.echo(f"trained on {len(dataset)} samples over {n_regions} regions; "
               f"final loss {final}; model at {model_out}")


@main.command("replay")
@click.option("--sequence", type=click.Path(exists=True), required=True)
@click.option("--model", "model_path", type=click.Path(exists=True), default=None)
@click.option("--oracle", is_flag=True,
              help="Use true-pose region lookups instead of a model.")
@click.option("--policy", type=click.Choice(["region", "baseline"]), default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.pass_context
@_guard
def replay_cmd(ctx, sequence, model_path, oracle, policy, out_dir):
    """Replay a sequence through the memory under a policy.

    With --oracle, the mapping prefix (frames of the first session) is
    clustered in a first pass and region confidences come from true-pose
    lookups against it.
    """
    cfg = _load_cfg(ctx)
    if model_path and oracle:
        raise ConfigError("--model and --oracle are mutually exclusive")
    frames = load_sequence(sequence)
    mem = cfgmod.memory_params(cfg, policy=policy)
    clu = cfgmod.cluster_params(cfg)
    predictor = None
    if oracle:
        first_seq = frames[0].seq
        prefix = [f for f in frames if f.seq == first_seq]
        predictor = OraclePredictor(replay(prefix, cfgmod.memory_params(cfg), clu))
    elif model_path:
        predictor = ModelPredictor(load_model(model_path))
    log = replay(frames, mem, clu, predictor)
    _run_outputs(Path(out_dir), log)
    loops = sum(1 for ev in log.events if ev.loop_closed)
    click.echo(f"replayed {len(frames)} frames under {mem.policy} policy; "
               f"{loops} loop closures; outputs in {out_dir}")


@main.command("eval")
@click.option("--sequence", type=click.Path(exists=True), required=True)
@click.option("--events", "events_path", type=click.Path(exists=True), required=True)
@click.option("--policy", default="region", show_default=True,
              help="Label recorded in the report.")
@click.option("--boundary", type=int, default=None,
              help="Frame index starting a relocalization session; omit for "
                   "within-run loop evaluation.")
@click.option("--report", "report_path", type=click.Path(), required=True)
@click.pass_context
@_guard
def eval_cmd(ctx, sequence, events_path, policy, boundary, report_path):
    """Score recorded loop closures against trajectory ground truth."""
    cfg = _load_cfg(ctx)
    frames = load_sequence(sequence)
    records = load_events(events_path)
    thresholds = cfgmod.gt_thresholds(cfg)
    gt = gt_matches(frames, thresholds, boundary=boundary)
    loop = eval_loops(gt, records, frames, thresholds, boundary=boundary)
    report = RunReport(policy=policy, frames=len(frames), loop=loop)
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    click.echo(f"{loop.detected}/{loop.total} revisit events detected, "
               f"{loop.false_positives} false positives; report at {report_path}")


@main.command("plot-data")
@click.option("--run", "run_dir", type=click.Path(exists=True), required=True,
              help="Directory holding clusters.csv / events.jsonl / latency.csv.")
@click.pass_context
@_guard
def plot_data_cmd(ctx, run_dir):
    """Render figures next to a run's delimited outputs."""
    from . import plots

    run = Path(run_dir)
    made = []
    clusters = run / "clusters.csv"
    if clusters.exists():
        with open(clusters, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            rows = [(int(r["node_id"]), float(r["x"]), float(r["y"]),
                     int(r["region_id"])) for r in reader]
        made.append(plots.plot_cluster_map(rows, run / "clusters.png"))
    latency = run / "latency.csv"
    if latency.exists():
        with open(latency, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            pairs = [(int(r["step"]), float(r["latency_us"])) for r in reader]
        if pairs:
            made.append(plots.plot_latency([p[0] for p in pairs],
                                           [p[1] for p in pairs],
                                           run / "latency.png"))
    reports = sorted(run.glob("report*.json"))
    if reports:
        loaded = []
        for rp in reports:
            with open(rp, "r", encoding="utf-8") as fh:
                loaded.append(json.load(fh))
        made.append(_plot_reports(loaded, run / "detections.png"))
    if not made:
        raise DataError(f"{run_dir}: nothing to plot")
    click.echo("rendered " + ", ".join(str(p) for p in made))


def _plot_reports(dicts, path):
    from .evaluate import LoopEval
    from . import plots

    reports = []
    for d in dicts:
        if "events_total" not in d:
            continue
        loop = LoopEval(d["events_total"], d["events_detected"],
                        d.get("false_positives", 0),
                        hits=[True] * d["events_detected"]
                        + [False] * (d["events_total"] - d["events_detected"]))
        reports.append(RunReport(policy=d.get("policy", "?"),
                                 frames=d.get("frames", 0), loop=loop))
    if not reports:
        raise DataError("no loop-evaluation reports found")
    return plots.plot_detections(reports, path)


if __name__ == "__main__":
    main()
