"""Sequence file I/O and synthetic trajectory generation.

A sequence is JSON Lines: one frame per line with fields seq (session
name), id (strictly increasing int), t (non-decreasing seconds), pose
([x, y, yaw]) and feature (list of floats, unit-normalized on load).
Lines starting with '#' are comments and blank lines are ignored, so
generators may prepend provenance headers without breaking readers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .geometry import Pose2
from .mapgraph import unit_feature

LAYOUTS = ("loop", "figure-eight", "grid")


@dataclass
class Frame:
    seq: str
    id: int
    t: float
    pose: Pose2
    feature: np.ndarray
    image: str | None = None


def load_sequence(path) -> list[Frame]:
    """Parse and validate a JSONL sequence file."""
    frames: list[Frame] = []
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: bad JSON ({exc.msg})") from exc
            try:
                seq = str(rec["seq"])
                fid = int(rec["id"])
                t = float(rec["t"])
                pose = rec["pose"]
                feat = rec["feature"]
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}: line {lineno}: missing or malformed field ({exc})") from exc
            if not isinstance(pose, list) or len(pose) != 3:
                raise DataError(f"{path}: line {lineno}: pose must be [x, y, yaw]")
            if frames and fid <= frames[-1].id:
                raise DataError(
                    f"{path}: line {lineno}: id {fid} not increasing after {frames[-1].id}")
            if frames and t < frames[-1].t and seq == frames[-1].seq:
                raise DataError(
                    f"{path}: line {lineno}: time {t} decreases within sequence {seq!r}")
            try:
                feature = unit_feature(feat, dim)
            except DataError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
            if dim is None:
                dim = feature.shape[0]
            frames.append(Frame(seq, fid, t, Pose2(*pose), feature,
                                rec.get("image")))
    if not frames:
        raise DataError(f"{path}: no frames")
    return frames


def write_sequence(path, frames, header: str | None = None):
    """Write frames as JSONL; identical inputs produce identical bytes."""
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for f in frames:
            rec = {
                "seq": f.seq,
                "id": f.id,
                "t": round(f.t, 6),
                "pose": [round(f.pose.x, 9), round(f.pose.y, 9), round(f.pose.yaw, 9)],
                "feature": [round(float(v), 9) for v in f.feature],
            }
            if f.image is not None:
                rec["image"] = f.image
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def _layout_pose(layout: str, i: int, n: int, step: float) -> Pose2:
    if layout == "loop":
        radius = n * step / (2.0 * math.pi)
        a = 2.0 * math.pi * i / n
        return Pose2(radius * math.cos(a), radius * math.sin(a), a + math.pi / 2.0)
    if layout == "figure-eight":
        # Gerono lemniscate scaled so successive frames sit roughly step apart.
        a = n * step / 6.0
        t = 2.0 * math.pi * i / n
        x = a * math.sin(t)
        y = a * math.sin(t) * math.cos(t)
        dx = a * math.cos(t)
        dy = a * math.cos(2.0 * t)
        return Pose2(x, y, math.atan2(dy, dx))
    if layout == "grid":
        # Lawnmower sweep: rows of equal length, alternating direction.
        cols = max(2, math.ceil(math.sqrt(n)))
        row, col = divmod(i, cols)
        x = col if row % 2 == 0 else cols - 1 - col
        yaw = 0.0 if row % 2 == 0 else math.pi
        at_turn = col == cols - 1
        if at_turn:
            yaw = math.pi / 2.0
        return Pose2(x * step, row * step, yaw)
    raise ConfigError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")


def gen_synthetic(layout: str, n: int, seed: int, dim: int = 16, zones: int = 8,
                  noise: float = 0.05, step: float = 1.0, seq: str = "synthetic"):
    """Deterministic synthetic run: poses along a layout, features per zone.

    The trajectory is cut into `zones` contiguous segments; each zone owns a
    random unit archetype vector and every frame's feature is its zone
    archetype plus Gaussian noise, renormalized. Returns (frames, zone
    labels) so callers can score predictions against the generating zones.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    if zones < 1 or zones > n:
        raise ConfigError("zones must lie in [1, n]")
    if dim < 1:
        raise ConfigError("dim must be >= 1")
    if noise < 0:
        raise ConfigError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    archetypes = rng.normal(size=(zones, dim))
    archetypes /= np.linalg.norm(archetypes, axis=1, keepdims=True)
    frames: list[Frame] = []
    labels: list[int] = []
    for i in range(n):
        zone = min(i * zones // n, zones - 1)
        raw = archetypes[zone] + noise * rng.normal(size=dim)
        frames.append(Frame(seq, i, float(i), _layout_pose(layout, i, n, step),
                            unit_feature(raw)))
        labels.append(zone)
    return frames, labels
