"""Dataset ingest and synthesis.

Reads the two production file formats (per-day trajectory CSV and
space-separated group annotation file) into validated domain objects, writes
them back out, and generates synthetic datasets of the same shape for
desk-scale experiments.

Trajectory CSV columns, in order:
    time (seconds, fractional part = milliseconds), person id, x [mm],
    y [mm], velocity [mm/s], motion angle [rad], facing angle [rad]

Group file rows (space separated):
    PEDESTRIAN-ID GROUP-SIZE PARTNER-ID... N-INTERACTING INTERACTING-ID...
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import IO, Iterable, Union

import numpy as np

from .core import GroupAnnotation, PairLabel, Trajectory, TrajectoryPoint, canonical_pair
from .errors import IngestFailure

Source = Union[str, Path, IO]

TRAJECTORY_COLUMNS = 7

# Side of the square start-position scatter used by the synthetic generator.
ARENA_MM = 50_000.0
# Synthetic timestamps start here (arbitrary epoch in the 2013 range of the
# real recordings, so synthetic CSVs look like the production ones).
SYNTH_EPOCH_MS = 1_368_000_000_000
# Shared flock heading is piecewise constant over segments of this length.
HEADING_SEGMENT_MS = 5_000


@dataclass(frozen=True)
class Dataset:
    """Trajectories plus group annotations from one source (e.g. one day)."""

    trajectories: dict[int, Trajectory]
    groups: tuple[GroupAnnotation, ...] = ()
    source_label: str = ""
    unresolved_ids: tuple[int, ...] = ()
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "unresolved_ids", tuple(self.unresolved_ids))
        object.__setattr__(self, "diagnostics", tuple(self.diagnostics))

    @property
    def agent_ids(self) -> list[int]:
        return sorted(self.trajectories)


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the synthetic dataset generator."""

    n_flocks: int = 10
    flock_size_distribution: tuple[tuple[int, float], ...] = ((2, 1.0),)
    n_singletons: int = 20
    duration_ms: int = 60_000
    sample_period_ms: int = 500
    cohesion_radius_mm: float = 2_000.0
    noise_std_mm: float = 50.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "flock_size_distribution",
            tuple((int(s), float(w)) for s, w in self.flock_size_distribution),
        )
        if self.n_flocks < 0 or self.n_singletons < 0:
            raise ValueError("counts must be >= 0")
        if self.sample_period_ms <= 0:
            raise ValueError("sample_period_ms must be > 0")
        if self.duration_ms < 0:
            raise ValueError("duration_ms must be >= 0")
        if any(s < 2 or w < 0 for s, w in self.flock_size_distribution):
            raise ValueError("flock sizes must be >= 2 with non-negative weights")
        if self.n_flocks > 0 and sum(w for _, w in self.flock_size_distribution) <= 0:
            raise ValueError("flock size weights must sum to a positive value")

    @property
    def points_per_agent(self) -> int:
        return self.duration_ms // self.sample_period_ms + 1


def parse_synthetic_config(source: Source) -> SyntheticConfig:
    """Read a `key = value` text file into a SyntheticConfig.

    The size distribution is written as e.g. `flock_size_distribution = 2:1.0,3:0.5`.
    """
    kwargs = {}
    for raw in _iter_lines(source):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "flock_size_distribution":
            pairs = []
            for item in value.split(","):
                size, _, weight = item.partition(":")
                pairs.append((int(size), float(weight)))
            kwargs[key] = tuple(pairs)
        elif key in ("cohesion_radius_mm", "noise_std_mm"):
            kwargs[key] = float(value)
        else:
            kwargs[key] = int(value)
    return SyntheticConfig(**kwargs)


def _iter_lines(source: Source) -> Iterable[str]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from fh
    else:
        for line in source:
            yield line.decode("utf-8") if isinstance(line, bytes) else line


def _parse_time_ms(text: str) -> int:
    """Decimal seconds -> integer milliseconds, rounding half-up."""
    ms = (Decimal(text) * 1000).quantize(Decimal(1), rounding=ROUND_HALF_UP)
    return int(ms)


def format_time_s(timestamp_ms: int) -> str:
    """Integer milliseconds -> decimal seconds with exactly 3 decimals."""
    sign = "-" if timestamp_ms < 0 else ""
    ms = abs(timestamp_ms)
    return f"{sign}{ms // 1000}.{ms % 1000:03d}"


def parse_trajectory_csv(
    source: Source,
    source_label: str = "",
    max_bad_fraction: float = 0.01,
) -> Dataset:
    """Parse a trajectory CSV into a Dataset (trajectories only).

    A header row is auto-detected (first field non-numeric) and skipped.
    Malformed rows and duplicate (agent, timestamp) records are dropped with
    a diagnostic; more than max_bad_fraction malformed rows raises
    IngestFailure with the offending line numbers.
    """
    per_agent: dict[int, dict[int, TrajectoryPoint]] = {}
    diagnostics: list[str] = []
    bad_lines: list[int] = []
    n_rows = 0

    for lineno, raw in enumerate(_iter_lines(source), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split(",")
        if lineno == 1 and not _is_number(fields[0]):
            diagnostics.append("line 1: header row skipped")
            continue
        n_rows += 1
        if len(fields) != TRAJECTORY_COLUMNS:
            bad_lines.append(lineno)
            diagnostics.append(
                f"line {lineno}: expected {TRAJECTORY_COLUMNS} columns, got {len(fields)}"
            )
            continue
        try:
            point = TrajectoryPoint(
                timestamp_ms=_parse_time_ms(fields[0]),
                agent_id=int(fields[1]),
                x_mm=float(fields[2]),
                y_mm=float(fields[3]),
                velocity_mm_s=float(fields[4]),
                motion_angle_rad=float(fields[5]),
                face_angle_rad=float(fields[6]),
            )
        except (ValueError, ArithmeticError) as exc:
            bad_lines.append(lineno)
            diagnostics.append(f"line {lineno}: {exc}")
            continue
        agent_points = per_agent.setdefault(point.agent_id, {})
        if point.timestamp_ms in agent_points:
            diagnostics.append(
                f"line {lineno}: DuplicateRecord agent {point.agent_id} "
                f"at {point.timestamp_ms} ms dropped"
            )
            continue
        agent_points[point.timestamp_ms] = point

    if n_rows and len(bad_lines) > max(1, math.ceil(max_bad_fraction * n_rows)):
        raise IngestFailure(
            f"{len(bad_lines)} of {n_rows} rows malformed "
            f"(limit {max_bad_fraction:.1%}); first bad lines: {bad_lines[:10]}",
            bad_lines=bad_lines,
        )

    trajectories = {
        agent: Trajectory(agent, tuple(points[t] for t in sorted(points)))
        for agent, points in sorted(per_agent.items())
    }
    return Dataset(trajectories=trajectories, source_label=source_label,
                   diagnostics=tuple(diagnostics))


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def parse_group_file(source: Source) -> tuple[list[GroupAnnotation], list[str]]:
    """Parse a group annotation file.

    Returns (annotations, diagnostics). Rows whose partner list is shorter
    than GROUP-SIZE - 1, or that otherwise violate the row layout, are
    reported as MalformedGroupRow diagnostics and skipped.
    """
    annotations: list[GroupAnnotation] = []
    diagnostics: list[str] = []
    for lineno, raw in enumerate(_iter_lines(source), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        try:
            annotations.append(_parse_group_row(tokens))
        except ValueError as exc:
            diagnostics.append(f"line {lineno}: MalformedGroupRow: {exc}")
    return annotations, diagnostics


def _parse_group_row(tokens: list[str]) -> GroupAnnotation:
    if len(tokens) < 3:
        raise ValueError(f"row has only {len(tokens)} fields")
    pedestrian_id = int(tokens[0])
    group_size = int(tokens[1])
    if group_size < 2:
        raise ValueError(f"GROUP-SIZE must be >= 2, got {group_size}")
    n_partners = group_size - 1
    cursor = 2
    if len(tokens) < cursor + n_partners + 1:
        raise ValueError(
            f"only {len(tokens) - cursor - 1} partner ids for GROUP-SIZE {group_size}"
        )
    partner_ids = tuple(int(t) for t in tokens[cursor:cursor + n_partners])
    cursor += n_partners
    interacting_count = int(tokens[cursor])
    cursor += 1
    if len(tokens) != cursor + interacting_count:
        raise ValueError(
            f"expected {interacting_count} interacting ids, got {len(tokens) - cursor}"
        )
    interacting_ids = tuple(int(t) for t in tokens[cursor:])
    return GroupAnnotation(pedestrian_id, group_size, partner_ids,
                           interacting_count, interacting_ids)


def load_dataset(
    trajectory_source: Source,
    group_source: Source | None = None,
    source_label: str = "",
    max_bad_fraction: float = 0.01,
) -> Dataset:
    """Parse trajectory CSV + optional group file into one checked Dataset.

    Partner references without a trajectory are collected in unresolved_ids
    (never silently dropped); one-sided annotations (A lists B but B has no
    row listing A) are accepted with a diagnostic.
    """
    base = parse_trajectory_csv(trajectory_source, source_label=source_label,
                                max_bad_fraction=max_bad_fraction)
    if group_source is None:
        return base

    groups, diagnostics = parse_group_file(group_source)
    diagnostics = list(base.diagnostics) + diagnostics

    known = set(base.trajectories)
    unresolved = set()
    listed_partners: dict[int, set[int]] = {}
    for ann in groups:
        listed_partners.setdefault(ann.pedestrian_id, set()).update(ann.partner_ids)
        for pid in (ann.pedestrian_id, *ann.partner_ids):
            if pid not in known:
                unresolved.add(pid)
    for ann in groups:
        for partner in ann.partner_ids:
            if partner in listed_partners and ann.pedestrian_id not in listed_partners[partner]:
                diagnostics.append(
                    f"inconsistent annotation: {partner} does not list "
                    f"{ann.pedestrian_id} back"
                )
            elif partner not in listed_partners:
                diagnostics.append(
                    f"one-sided annotation: {ann.pedestrian_id} lists {partner}, "
                    f"which has no row"
                )
    if unresolved:
        diagnostics.append(f"{len(unresolved)} annotated ids have no trajectory")

    return Dataset(
        trajectories=base.trajectories,
        groups=tuple(groups),
        source_label=source_label,
        unresolved_ids=tuple(sorted(unresolved)),
        diagnostics=tuple(diagnostics),
    )


def write_trajectory_csv(dataset: Dataset, target: Source) -> None:
    """Serialize trajectories back to the 7-column CSV layout.

    Rows are ordered by timestamp then agent id; timestamps are written as
    decimal seconds with millisecond precision.
    """
    rows = []
    for traj in dataset.trajectories.values():
        rows.extend(traj.points)
    rows.sort(key=lambda p: (p.timestamp_ms, p.agent_id))
    lines = [
        ",".join((
            format_time_s(p.timestamp_ms),
            str(p.agent_id),
            repr(p.x_mm),
            repr(p.y_mm),
            repr(p.velocity_mm_s),
            repr(p.motion_angle_rad),
            repr(p.face_angle_rad),
        ))
        for p in rows
    ]
    _write_lines(target, lines)


def write_group_file(groups: Iterable[GroupAnnotation], target: Source) -> None:
    """Serialize annotations back to the space-separated group file layout."""
    lines = []
    for ann in groups:
        tokens = [str(ann.pedestrian_id), str(ann.group_size)]
        tokens += [str(p) for p in ann.partner_ids]
        tokens.append(str(ann.interacting_count))
        tokens += [str(p) for p in ann.interacting_ids]
        lines.append(" ".join(tokens))
    _write_lines(target, lines)


def _write_lines(target: Source, lines: list[str]) -> None:
    text = "\n".join(lines) + ("\n" if lines else "")
    if isinstance(target, (str, Path)):
        Path(target).write_text(text, encoding="utf-8")
    else:
        target.write(text)


def extract_pair_labels(dataset: Dataset) -> list[PairLabel]:
    """Positive pair labels from size-2 groups, deduplicated.

    Mirrored annotations (A lists B, B lists A) collapse to one canonical
    pair. Groups of any other size contribute nothing.
    """
    seen: set[tuple[int, int]] = set()
    labels: list[PairLabel] = []
    for ann in dataset.groups:
        if ann.group_size != 2:
            continue
        pair = canonical_pair(ann.pedestrian_id, ann.partner_ids[0])
        if pair not in seen:
            seen.add(pair)
            labels.append(PairLabel(pair[0], pair[1], 1))
    labels.sort(key=lambda pl: pl.pair)
    return labels


def list_singletons(dataset: Dataset) -> list[int]:
    """Agents that have a trajectory but appear in no group annotation."""
    grouped: set[int] = set()
    for ann in dataset.groups:
        grouped.add(ann.pedestrian_id)
        grouped.update(ann.partner_ids)
    return sorted(set(dataset.trajectories) - grouped)


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """Generate a synthetic Dataset with ground-truth group annotations.

    Flock members share a piecewise-constant heading field (resampled every
    5 s) with independent Gaussian positional noise, and are rescaled about
    their centroid so no member ever strays beyond cohesion_radius_mm.
    Singletons follow independent random walks. Deterministic for a fixed
    rng_seed.
    """
    rng = np.random.default_rng(config.rng_seed)
    n_points = config.points_per_agent
    period_s = config.sample_period_ms / 1000.0

    trajectories: dict[int, Trajectory] = {}
    groups: list[GroupAnnotation] = []
    next_id = 1

    flock_sizes = _draw_flock_sizes(rng, config)
    for size in flock_sizes:
        member_ids = list(range(next_id, next_id + size))
        next_id += size
        start_ms = SYNTH_EPOCH_MS + _draw_start_offset(rng, config)
        centroid = _walk_path(rng, n_points, period_s)
        offsets = _member_offsets(rng, size, config.cohesion_radius_mm)
        noise = rng.normal(0.0, config.noise_std_mm, size=(size, n_points, 2))
        positions = centroid[None, :, :] + offsets[:, None, :] + noise
        positions = _enforce_cohesion(positions, config.cohesion_radius_mm)
        for idx, agent in enumerate(member_ids):
            trajectories[agent] = _kinematics_to_trajectory(
                rng, agent, positions[idx], start_ms, config.sample_period_ms)
        for agent in member_ids:
            partners = tuple(m for m in member_ids if m != agent)
            groups.append(GroupAnnotation(agent, size, partners, len(partners), partners))

    for _ in range(config.n_singletons):
        agent = next_id
        next_id += 1
        start_ms = SYNTH_EPOCH_MS + _draw_start_offset(rng, config)
        path = _walk_path(rng, n_points, period_s)
        path += rng.normal(0.0, config.noise_std_mm, size=path.shape)
        trajectories[agent] = _kinematics_to_trajectory(
            rng, agent, path, start_ms, config.sample_period_ms)

    return Dataset(
        trajectories=trajectories,
        groups=tuple(groups),
        source_label=f"synthetic-seed{config.rng_seed}",
    )


def _draw_flock_sizes(rng: np.random.Generator, config: SyntheticConfig) -> list[int]:
    if config.n_flocks == 0:
        return []
    sizes = np.array([s for s, _ in config.flock_size_distribution])
    weights = np.array([w for _, w in config.flock_size_distribution], dtype=float)
    weights /= weights.sum()
    return [int(s) for s in rng.choice(sizes, size=config.n_flocks, p=weights)]


def _draw_start_offset(rng: np.random.Generator, config: SyntheticConfig) -> int:
    # Start times scattered over one track duration, so a recording spans
    # roughly twice duration_ms and covers several one-minute bins.
    if config.duration_ms == 0:
        return 0
    return int(rng.integers(0, config.duration_ms))


def _walk_path(rng: np.random.Generator, n_points: int, period_s: float) -> np.ndarray:
    """Piecewise-constant-heading walk starting at a random arena position."""
    steps_per_segment = max(1, int(round(HEADING_SEGMENT_MS / (period_s * 1000.0))))
    speed = rng.uniform(900.0, 1500.0)
    start = rng.uniform(-ARENA_MM / 2, ARENA_MM / 2, size=2)
    n_segments = max(1, math.ceil((n_points - 1) / steps_per_segment)) if n_points > 1 else 1
    headings = np.empty(n_segments)
    headings[0] = rng.uniform(-math.pi, math.pi)
    for i in range(1, n_segments):
        headings[i] = headings[i - 1] + rng.normal(0.0, 0.4)
    per_step = np.repeat(headings, steps_per_segment)[: max(0, n_points - 1)]
    deltas = speed * period_s * np.stack([np.cos(per_step), np.sin(per_step)], axis=1)
    path = np.empty((n_points, 2))
    path[0] = start
    if n_points > 1:
        path[1:] = start + np.cumsum(deltas, axis=0)
    return path


def _member_offsets(rng: np.random.Generator, size: int, radius_mm: float) -> np.ndarray:
    r = 0.45 * radius_mm * np.sqrt(rng.uniform(0.0, 1.0, size=size))
    phi = rng.uniform(-math.pi, math.pi, size=size)
    return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)


def _enforce_cohesion(positions: np.ndarray, radius_mm: float) -> np.ndarray:
    """Rescale member deviations about the per-step centroid to < radius."""
    centroid = positions.mean(axis=0, keepdims=True)
    dev = positions - centroid
    dist = np.linalg.norm(dev, axis=2)
    max_dist = dist.max(axis=0)
    scale = np.where(max_dist > 0.98 * radius_mm, 0.98 * radius_mm / np.maximum(max_dist, 1e-9), 1.0)
    return centroid + dev * scale[None, :, None]


def _kinematics_to_trajectory(
    rng: np.random.Generator,
    agent_id: int,
    path: np.ndarray,
    start_ms: int,
    period_ms: int,
) -> Trajectory:
    n = path.shape[0]
    deltas = np.diff(path, axis=0)
    speed = np.linalg.norm(deltas, axis=1) / (period_ms / 1000.0)
    motion = np.arctan2(deltas[:, 1], deltas[:, 0])
    if n > 1:
        speed = np.concatenate([[speed[0]], speed])
        motion = np.concatenate([[motion[0]], motion])
    else:
        speed = np.zeros(1)
        motion = np.zeros(1)
    face = motion + rng.normal(0.0, 0.05, size=n)
    points = tuple(
        TrajectoryPoint(
            timestamp_ms=start_ms + k * period_ms,
            agent_id=agent_id,
            x_mm=float(path[k, 0]),
            y_mm=float(path[k, 1]),
            velocity_mm_s=float(speed[k]),
            motion_angle_rad=float(motion[k]),
            face_angle_rad=float(face[k]),
        )
        for k in range(n)
    )
    return Trajectory(agent_id, points)
