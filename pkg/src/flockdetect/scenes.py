"""Time-binned scene construction and labeled pair-dataset building.

Two consumers of a Dataset live here:

* detection wants scenes: agents grouped by the time bin of their first
  record, each contributing one length-L block of consecutive points;
* training wants labeled pairs: size-2 groups as positives, random
  singleton pairs as negatives, split 80/20 with stratified labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import TrajectoryPoint, canonical_pair, normalize_angle
from .errors import CannotInterpolate, InsufficientNegatives, InvalidBinWidth
from .ingest import Dataset, Source, _iter_lines, _parse_time_ms, format_time_s
from .ingest import extract_pair_labels, list_singletons

SCENE_MAGIC = "# flockdetect scene v1"
PAIRS_MAGIC = "# flockdetect pairs v1"


@dataclass(frozen=True)
class SceneBin:
    """Cohort of agents whose first records fall in one width-T time bin."""

    bin_index: int
    bin_start_ms: int
    bin_width_ms: int
    sequence_length: int
    member_ids: tuple[int, ...]
    blocks: dict[int, tuple[TrajectoryPoint, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "member_ids", tuple(self.member_ids))
        for agent, block in self.blocks.items():
            if len(block) != self.sequence_length:
                raise ValueError(
                    f"block of agent {agent} has {len(block)} points, "
                    f"expected {self.sequence_length}"
                )


@dataclass(frozen=True)
class PairDatasetSpec:
    """Parameters for turning a Dataset into a labeled pair dataset."""

    sequence_length_L: int = 100
    negative_ratio: float = 1.0
    balance_strategy: str = "weighted_loss"
    train_fraction: float = 0.8
    rng_seed: int = 0

    BALANCE_STRATEGIES = ("weighted_loss", "oversample", "undersample",
                          "synthetic_interpolation")

    def __post_init__(self):
        if self.sequence_length_L <= 1:
            raise ValueError("sequence_length_L must be > 1")
        if self.negative_ratio <= 0:
            raise ValueError("negative_ratio must be > 0")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.balance_strategy not in self.BALANCE_STRATEGIES:
            raise ValueError(f"unknown balance_strategy {self.balance_strategy!r}")


@dataclass(frozen=True)
class RawPairSample:
    """A pair of aligned length-L blocks plus its label, pre-featurization."""

    agent_a: int
    agent_b: int
    block_a: tuple[TrajectoryPoint, ...]
    block_b: tuple[TrajectoryPoint, ...]
    label: int
    synthetic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "block_a", tuple(self.block_a))
        object.__setattr__(self, "block_b", tuple(self.block_b))
        if len(self.block_a) != len(self.block_b):
            raise ValueError("pair blocks must have equal length")


def assign_time_bins(dataset: Dataset, t_ms: int, sequence_length: int) -> list[SceneBin]:
    """Assign each agent with >= L points to a time bin by its first record.

    bin = floor((t_first - t_min) / T), with t_min the earliest first
    timestamp among retained agents. Bins with no agents are omitted;
    blocks are left unfilled.
    """
    if t_ms <= 0:
        raise InvalidBinWidth(f"bin width must be > 0 ms, got {t_ms}")
    retained = [
        traj for traj in dataset.trajectories.values()
        if len(traj) >= sequence_length
    ]
    if not retained:
        return []
    t_min = min(traj.first_timestamp_ms for traj in retained)
    members: dict[int, list[tuple[int, int]]] = {}
    for traj in retained:
        index = (traj.first_timestamp_ms - t_min) // t_ms
        members.setdefault(index, []).append((traj.first_timestamp_ms, traj.agent_id))
    bins = []
    for index in sorted(members):
        ordered = [agent for _, agent in sorted(members[index])]
        bins.append(SceneBin(
            bin_index=index,
            bin_start_ms=t_min + index * t_ms,
            bin_width_ms=t_ms,
            sequence_length=sequence_length,
            member_ids=tuple(ordered),
        ))
    return bins


def fill_sequence_blocks(
    dataset: Dataset,
    bins: Iterable[SceneBin],
    sequence_length: int,
) -> tuple[list[SceneBin], list[str]]:
    """Attach each member's first L points as its block.

    Members that cannot supply L points are dropped with a diagnostic;
    bins left empty are omitted. Returns (filled bins, diagnostics).
    """
    filled: list[SceneBin] = []
    diagnostics: list[str] = []
    for scene in bins:
        blocks: dict[int, tuple[TrajectoryPoint, ...]] = {}
        kept: list[int] = []
        for agent in scene.member_ids:
            traj = dataset.trajectories.get(agent)
            if traj is None or len(traj) < sequence_length:
                diagnostics.append(
                    f"bin {scene.bin_index}: agent {agent} dropped "
                    f"(cannot supply {sequence_length} points)"
                )
                continue
            blocks[agent] = traj.points[:sequence_length]
            kept.append(agent)
        if not kept:
            continue
        filled.append(replace(scene, sequence_length=sequence_length,
                              member_ids=tuple(kept), blocks=blocks))
    return filled, diagnostics


def build_pair_dataset(
    dataset: Dataset,
    spec: PairDatasetSpec,
) -> tuple[list[RawPairSample], list[RawPairSample]]:
    """Build the labeled (train, test) pair sets.

    Positives are size-2 groups whose members both reach L points; negatives
    are distinct random singleton pairs, negative_ratio per positive. The
    split is stratified by label so both halves keep the class ratio. The
    train-side balance strategy (oversample / undersample / interpolation)
    is applied after splitting; weighted_loss leaves the data untouched.
    """
    L = spec.sequence_length_L
    rng = np.random.default_rng(spec.rng_seed)

    positives = []
    for pl in extract_pair_labels(dataset):
        ta = dataset.trajectories.get(pl.agent_a)
        tb = dataset.trajectories.get(pl.agent_b)
        if ta is None or tb is None or len(ta) < L or len(tb) < L:
            continue
        positives.append(RawPairSample(
            pl.agent_a, pl.agent_b, ta.points[:L], tb.points[:L], 1))

    if not positives:
        return [], []

    eligible = [a for a in list_singletons(dataset) if len(dataset.trajectories[a]) >= L]
    n_needed = int(round(spec.negative_ratio * len(positives)))
    all_pairs = [(a, b) for i, a in enumerate(eligible) for b in eligible[i + 1:]]
    if len(all_pairs) < n_needed:
        raise InsufficientNegatives(n_needed, len(all_pairs))
    order = rng.permutation(len(all_pairs))
    negatives = []
    for idx in order[:n_needed]:
        a, b = all_pairs[idx]
        a, b = canonical_pair(a, b)
        negatives.append(RawPairSample(
            a, b,
            dataset.trajectories[a].points[:L],
            dataset.trajectories[b].points[:L],
            0,
        ))

    train, test = _stratified_split(positives, negatives, spec.train_fraction, rng)
    train = _apply_balance_strategy(train, spec, rng)
    return train, test


def _stratified_split(positives, negatives, train_fraction, rng):
    train: list[RawPairSample] = []
    test: list[RawPairSample] = []
    for group in (positives, negatives):
        order = rng.permutation(len(group))
        n_train = int(math.floor(train_fraction * len(group) + 0.5))
        for pos, idx in enumerate(order):
            (train if pos < n_train else test).append(group[idx])
    return train, test


def _apply_balance_strategy(train, spec, rng):
    pos = [s for s in train if s.label == 1]
    neg = [s for s in train if s.label == 0]
    if spec.balance_strategy == "weighted_loss" or len(pos) == len(neg):
        return train
    minority, majority = (pos, neg) if len(pos) < len(neg) else (neg, pos)
    if spec.balance_strategy == "oversample":
        extra_idx = rng.integers(0, len(minority), size=len(majority) - len(minority))
        train = train + [minority[i] for i in extra_idx]
    elif spec.balance_strategy == "undersample":
        keep = rng.permutation(len(majority))[: len(minority)]
        kept = [majority[i] for i in sorted(keep)]
        train = minority + kept
    elif spec.balance_strategy == "synthetic_interpolation":
        if minority is not pos:
            # Interpolation only synthesizes flocking sequences; a negative
            # minority falls back to plain oversampling.
            return _apply_balance_strategy(train, replace(spec, balance_strategy="oversample"), rng)
        k = len(majority) - len(minority)
        train = train + interpolate_synthetic_positives(
            pos, k, int(rng.integers(0, 2**31 - 1)))
    return train


def interpolate_synthetic_positives(
    samples: Iterable[RawPairSample],
    k: int,
    rng_seed: int,
) -> list[RawPairSample]:
    """Make k new positives, each a convex blend of two existing positives.

    Every field is interpolated pointwise with one weight drawn from
    U(0.25, 0.75) per new sample; angles take the shortest arc.
    """
    positives = [s for s in samples if s.label == 1]
    if len(positives) < 2:
        raise CannotInterpolate(f"need >= 2 positives, got {len(positives)}")
    if k == 0:
        return []
    rng = np.random.default_rng(rng_seed)
    out = []
    for _ in range(k):
        i, j = rng.choice(len(positives), size=2, replace=False)
        lam = float(rng.uniform(0.25, 0.75))
        first, second = positives[i], positives[j]
        out.append(RawPairSample(
            agent_a=first.agent_a,
            agent_b=first.agent_b,
            block_a=_blend_blocks(first.block_a, second.block_a, lam),
            block_b=_blend_blocks(first.block_b, second.block_b, lam),
            label=1,
            synthetic=True,
        ))
    return out


def _blend_blocks(block_p, block_q, lam):
    n = min(len(block_p), len(block_q))
    return tuple(_blend_points(block_p[t], block_q[t], lam) for t in range(n))


def _blend_points(p: TrajectoryPoint, q: TrajectoryPoint, lam: float) -> TrajectoryPoint:
    return TrajectoryPoint(
        timestamp_ms=int(math.floor(lam * p.timestamp_ms + (1 - lam) * q.timestamp_ms + 0.5)),
        agent_id=p.agent_id,
        x_mm=lam * p.x_mm + (1 - lam) * q.x_mm,
        y_mm=lam * p.y_mm + (1 - lam) * q.y_mm,
        velocity_mm_s=lam * p.velocity_mm_s + (1 - lam) * q.velocity_mm_s,
        motion_angle_rad=_circular_blend(p.motion_angle_rad, q.motion_angle_rad, lam),
        face_angle_rad=_circular_blend(p.face_angle_rad, q.face_angle_rad, lam),
    )


def _circular_blend(a: float, b: float, lam: float) -> float:
    """Weight lam toward a, along the shortest arc from b to a."""
    return normalize_angle(b + lam * normalize_angle(a - b))


# ---------------------------------------------------------------------------
# Scene files: one line-oriented text file per bin.
# ---------------------------------------------------------------------------

def scene_filename(bin_index: int) -> str:
    return f"scene_{bin_index:05d}.txt"


def write_scene_file(scene: SceneBin, target: Source) -> None:
    lines = [
        SCENE_MAGIC,
        f"bin_index = {scene.bin_index}",
        f"bin_start_ms = {scene.bin_start_ms}",
        f"bin_width_ms = {scene.bin_width_ms}",
        f"sequence_length = {scene.sequence_length}",
        f"member_count = {len(scene.member_ids)}",
    ]
    for agent in scene.member_ids:
        lines.append(f"[agent {agent}]")
        lines.extend(_point_csv(p) for p in scene.blocks[agent])
    text = "\n".join(lines) + "\n"
    if isinstance(target, (str, Path)):
        Path(target).write_text(text, encoding="utf-8")
    else:
        target.write(text)


def write_scene_dir(bins: Iterable[SceneBin], out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for scene in bins:
        path = out_dir / scene_filename(scene.bin_index)
        write_scene_file(scene, path)
        paths.append(path)
    return paths


def read_scene_file(source: Source) -> SceneBin:
    lines = [ln.rstrip("\n") for ln in _iter_lines(source)]
    if not lines or lines[0].strip() != SCENE_MAGIC:
        raise ValueError(f"not a scene file (missing {SCENE_MAGIC!r} header)")
    header: dict[str, int] = {}
    cursor = 1
    while cursor < len(lines) and not lines[cursor].startswith("[agent"):
        key, _, value = lines[cursor].partition("=")
        if value:
            header[key.strip()] = int(value.strip())
        cursor += 1
    L = header["sequence_length"]
    member_ids: list[int] = []
    blocks: dict[int, tuple[TrajectoryPoint, ...]] = {}
    while cursor < len(lines):
        line = lines[cursor].strip()
        if not line:
            cursor += 1
            continue
        if not (line.startswith("[agent") and line.endswith("]")):
            raise ValueError(f"expected [agent ...] header, got {line!r}")
        agent = int(line[len("[agent"): -1].strip())
        cursor += 1
        points = []
        for _ in range(L):
            points.append(_point_from_csv(lines[cursor]))
            cursor += 1
        member_ids.append(agent)
        blocks[agent] = tuple(points)
    return SceneBin(
        bin_index=header["bin_index"],
        bin_start_ms=header["bin_start_ms"],
        bin_width_ms=header["bin_width_ms"],
        sequence_length=L,
        member_ids=tuple(member_ids),
        blocks=blocks,
    )


def read_scene_dir(scene_dir: str | Path) -> list[SceneBin]:
    scene_dir = Path(scene_dir)
    bins = [read_scene_file(p) for p in sorted(scene_dir.glob("scene_*.txt"))]
    return sorted(bins, key=lambda b: b.bin_index)


def _point_csv(p: TrajectoryPoint) -> str:
    return ",".join((
        format_time_s(p.timestamp_ms), str(p.agent_id),
        repr(p.x_mm), repr(p.y_mm), repr(p.velocity_mm_s),
        repr(p.motion_angle_rad), repr(p.face_angle_rad),
    ))


def _point_from_csv(line: str) -> TrajectoryPoint:
    f = line.strip().split(",")
    return TrajectoryPoint(
        timestamp_ms=_parse_time_ms(f[0]),
        agent_id=int(f[1]),
        x_mm=float(f[2]),
        y_mm=float(f[3]),
        velocity_mm_s=float(f[4]),
        motion_angle_rad=float(f[5]),
        face_angle_rad=float(f[6]),
    )


# ---------------------------------------------------------------------------
# Pair dataset files: one data file plus a manifest CSV.
# ---------------------------------------------------------------------------

def write_pair_dataset(
    train: list[RawPairSample],
    test: list[RawPairSample],
    out_dir: str | Path,
    sequence_length: int | None = None,
) -> tuple[Path, Path]:
    """Write pairs.txt (blocks) and pair_manifest.csv (id, agents, label, split)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = out_dir / "pairs.txt"
    manifest_path = out_dir / "pair_manifest.csv"

    if sequence_length is not None:
        L = sequence_length
    else:
        L = len(train[0].block_a) if train else (len(test[0].block_a) if test else 0)
    lines = [PAIRS_MAGIC, f"sequence_length = {L}",
             f"count = {len(train) + len(test)}"]
    manifest = ["sample_id,agent_a,agent_b,label,split,synthetic"]
    sample_id = 0
    for split, samples in (("train", train), ("test", test)):
        for s in samples:
            lines.append(
                f"[sample] id={sample_id} agents={s.agent_a},{s.agent_b} "
                f"label={s.label} split={split} synthetic={int(s.synthetic)}"
            )
            for pa, pb in zip(s.block_a, s.block_b):
                lines.append(_point_csv(pa) + ";" + _point_csv(pb))
            manifest.append(
                f"{sample_id},{s.agent_a},{s.agent_b},{s.label},{split},{int(s.synthetic)}"
            )
            sample_id += 1
    data_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    manifest_path.write_text("\n".join(manifest) + "\n", encoding="utf-8")
    return data_path, manifest_path


def read_pair_dataset(path: str | Path) -> tuple[list[RawPairSample], list[RawPairSample], int]:
    """Read pairs.txt back into (train, test, L)."""
    lines = [ln.rstrip("\n") for ln in _iter_lines(path)]
    if not lines or lines[0].strip() != PAIRS_MAGIC:
        raise ValueError(f"not a pair dataset file (missing {PAIRS_MAGIC!r} header)")
    L = int(lines[1].partition("=")[2])
    train: list[RawPairSample] = []
    test: list[RawPairSample] = []
    cursor = 3
    while cursor < len(lines):
        line = lines[cursor].strip()
        if not line:
            cursor += 1
            continue
        if not line.startswith("[sample]"):
            raise ValueError(f"expected [sample] header, got {line!r}")
        attrs = dict(item.split("=", 1) for item in line.split()[1:])
        agent_a, agent_b = (int(x) for x in attrs["agents"].split(","))
        cursor += 1
        block_a, block_b = [], []
        for _ in range(L):
            part_a, _, part_b = lines[cursor].partition(";")
            block_a.append(_point_from_csv(part_a))
            block_b.append(_point_from_csv(part_b))
            cursor += 1
        sample = RawPairSample(agent_a, agent_b, tuple(block_a), tuple(block_b),
                               int(attrs["label"]), synthetic=attrs.get("synthetic") == "1")
        (train if attrs["split"] == "train" else test).append(sample)
    return train, test, L
