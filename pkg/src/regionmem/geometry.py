"""Planar pose type and the two geometric comparisons used everywhere else."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DataError


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    t = math.remainder(theta, math.tau)
    if t <= -math.pi:
        t += math.tau
    return t


@dataclass(frozen=True)
class Pose2:
    """Planar pose: position in meters, heading in radians.

    yaw is normalized to (-pi, pi] at construction; x and y must be finite.
    """

    x: float
    y: float
    yaw: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.yaw)):
            raise DataError(f"non-finite pose ({self.x}, {self.y}, {self.yaw})")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))


def planar_distance(a: Pose2, b: Pose2) -> float:
    """Euclidean distance between the two (x, y) locations."""
    return math.hypot(a.x - b.x, a.y - b.y)


def angle_diff(a: Pose2, b: Pose2) -> float:
    """Minimal absolute heading difference, with wraparound; in [0, pi]."""
    return abs(wrap_angle(a.yaw - b.yaw))
