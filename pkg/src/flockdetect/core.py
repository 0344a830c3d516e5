"""Shared domain types and id/angle conventions.

Positions are millimetres, velocities mm/s, angles radians, timestamps
integer milliseconds since the Unix epoch. All types are immutable after
construction and safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvalidAngle, InvalidPair

TWO_PI = 2.0 * math.pi


def canonical_pair(a: int, b: int) -> tuple[int, int]:
    """Return the unique (min, max) representation of an unordered id pair."""
    if a == b:
        raise InvalidPair(f"pair ({a}, {b}) is degenerate")
    return (a, b) if a < b else (b, a)


def normalize_angle(theta: float) -> float:
    """Wrap an angle into [-pi, pi).

    The interval is half-open: +pi maps to -pi, so every direction has
    exactly one representation.
    """
    if not math.isfinite(theta):
        raise InvalidAngle(f"angle is not finite: {theta!r}")
    if -math.pi <= theta < math.pi:
        return theta
    wrapped = math.fmod(theta + math.pi, TWO_PI)
    if wrapped < 0:
        wrapped += TWO_PI
    return wrapped - math.pi


@dataclass(frozen=True)
class TrajectoryPoint:
    """One tracked record of one pedestrian.

    Angles are normalized into [-pi, pi) at construction; a negative
    velocity or non-finite field is rejected.
    """

    timestamp_ms: int
    agent_id: int
    x_mm: float
    y_mm: float
    velocity_mm_s: float
    motion_angle_rad: float
    face_angle_rad: float

    def __post_init__(self):
        for name in ("x_mm", "y_mm", "velocity_mm_s", "motion_angle_rad", "face_angle_rad"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} is not finite: {getattr(self, name)!r}")
        if self.velocity_mm_s < 0:
            raise ValueError(f"velocity_mm_s must be >= 0, got {self.velocity_mm_s}")
        object.__setattr__(self, "motion_angle_rad", normalize_angle(self.motion_angle_rad))
        object.__setattr__(self, "face_angle_rad", normalize_angle(self.face_angle_rad))


@dataclass(frozen=True)
class Trajectory:
    """Ordered record stream of a single pedestrian.

    Points are strictly sorted by timestamp; duplicate timestamps for the
    same agent are an ingest-time error and never reach this type.
    """

    agent_id: int
    points: tuple[TrajectoryPoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        for p in self.points:
            if p.agent_id != self.agent_id:
                raise ValueError(
                    f"point agent_id {p.agent_id} does not match trajectory {self.agent_id}"
                )
        stamps = [p.timestamp_ms for p in self.points]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ValueError(f"points of agent {self.agent_id} are not strictly time-sorted")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def first_timestamp_ms(self) -> int:
        return self.points[0].timestamp_ms


@dataclass(frozen=True)
class GroupAnnotation:
    """One pedestrian's row from a group annotation file."""

    pedestrian_id: int
    group_size: int
    partner_ids: tuple[int, ...]
    interacting_count: int
    interacting_ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "partner_ids", tuple(self.partner_ids))
        object.__setattr__(self, "interacting_ids", tuple(self.interacting_ids))
        if self.group_size < 2:
            raise ValueError(f"group_size must be >= 2, got {self.group_size}")
        if len(self.partner_ids) != self.group_size - 1:
            raise ValueError(
                f"expected {self.group_size - 1} partners, got {len(self.partner_ids)}"
            )
        if len(self.interacting_ids) != self.interacting_count:
            raise ValueError(
                f"expected {self.interacting_count} interacting ids, "
                f"got {len(self.interacting_ids)}"
            )
        if self.pedestrian_id in self.partner_ids:
            raise ValueError(f"pedestrian {self.pedestrian_id} lists itself as partner")

    @property
    def member_ids(self) -> frozenset[int]:
        """Full member set of the annotated group (self plus partners)."""
        return frozenset((self.pedestrian_id, *self.partner_ids))


@dataclass(frozen=True)
class PairLabel:
    """Canonical unordered pair of agents with a flock/non-flock label."""

    agent_a: int
    agent_b: int
    label: int = field(default=1)

    def __post_init__(self):
        if self.agent_a >= self.agent_b:
            raise ValueError(f"pair ({self.agent_a}, {self.agent_b}) is not canonical (a < b)")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")

    @property
    def pair(self) -> tuple[int, int]:
        return (self.agent_a, self.agent_b)
