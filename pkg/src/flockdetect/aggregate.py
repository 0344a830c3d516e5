"""From pairwise predictions to flocks.

Every pair in a scene bin is classified; pairs at or above the confidence
threshold become edges; union-find with path compression merges the edges
into connected components; components of size >= 2 are the flocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping

import numpy as np

from .core import GroupAnnotation, canonical_pair
from .errors import ConfigMismatch
from .features import featurize_pair, scale_features
from .scenes import SceneBin
from .seqnet.model import SequenceModel


@dataclass(frozen=True)
class PairPrediction:
    agent_a: int
    agent_b: int
    probability: float
    is_flock: int

    def __post_init__(self):
        if self.agent_a >= self.agent_b:
            raise ValueError("pair must be canonical (agent_a < agent_b)")

    @property
    def pair(self) -> tuple[int, int]:
        return (self.agent_a, self.agent_b)


@dataclass(frozen=True)
class FlockSet:
    """Partition of a scene's members into flocks (size >= 2) and singletons."""

    flocks: tuple[tuple[int, ...], ...]
    singletons: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "flocks", tuple(tuple(f) for f in self.flocks))
        object.__setattr__(self, "singletons", tuple(self.singletons))
        seen: set[int] = set()
        for flock in self.flocks:
            if len(flock) < 2:
                raise ValueError(f"flock {flock} has fewer than 2 members")
            if list(flock) != sorted(flock):
                raise ValueError(f"flock {flock} is not sorted")
            if seen.intersection(flock):
                raise ValueError("agent appears in more than one flock")
            seen.update(flock)
        overlap = seen.intersection(self.singletons)
        if overlap:
            raise ValueError(f"agents {sorted(overlap)} are both flocked and singleton")

    @property
    def members(self) -> frozenset[int]:
        out = set(self.singletons)
        for flock in self.flocks:
            out.update(flock)
        return frozenset(out)

    def flock_sizes(self) -> list[int]:
        return [len(f) for f in self.flocks]


class UnionFind:
    """Disjoint sets over agent ids with full path compression.

    Roots are tie-broken toward the smaller id, which makes the root of
    every component — not just the partition — reproducible.
    """

    def __init__(self, elements: Iterable[int] = ()):
        self.parent: dict[int, int] = {e: e for e in elements}

    def add(self, element: int) -> None:
        self.parent.setdefault(element, element)

    def find_root(self, element: int) -> int:
        self.add(element)
        root = element
        while self.parent[root] != root:
            root = self.parent[root]
        # Compress: everything on the walked chain points straight at the root.
        node = element
        while self.parent[node] != root:
            self.parent[node], node = root, self.parent[node]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find_root(a), self.find_root(b)
        if ra == rb:
            return
        keep, absorb = (ra, rb) if ra < rb else (rb, ra)
        self.parent[absorb] = keep

    def components(self) -> list[list[int]]:
        groups: dict[int, list[int]] = {}
        for element in self.parent:
            groups.setdefault(self.find_root(element), []).append(element)
        return [sorted(members) for _, members in sorted(groups.items())]


def evaluate_all_pairs(model: SequenceModel, scene: SceneBin,
                       threshold: float) -> list[PairPrediction]:
    """Classify every C(n, 2) pair of a filled scene bin, canonically ordered."""
    trained_L = model.meta.trained_sequence_length
    if trained_L is not None and scene.sequence_length != trained_L:
        raise ConfigMismatch(
            f"model sequence length {trained_L} != scene bin "
            f"sequence length {scene.sequence_length}")
    if model.scaler is None:
        raise ConfigMismatch("model has no fitted scaler")
    pairs = [canonical_pair(a, b) for a, b in combinations(scene.member_ids, 2)]
    pairs.sort()
    if not pairs:
        return []
    batch = np.stack([
        scale_features(model.scaler, featurize_pair(
            scene.blocks[a], scene.blocks[b], model.config.dtw_mode))
        for a, b in pairs
    ])
    probs = model.forward_batch(batch)
    return [
        PairPrediction(a, b, float(p), 1 if p >= threshold else 0)
        for (a, b), p in zip(pairs, probs)
    ]


def aggregate_flocks(predictions: Iterable[PairPrediction],
                     all_members: Iterable[int]) -> FlockSet:
    """Union positive pairs; components of size >= 2 are flocks.

    Flocks are listed in ascending order of their smallest member. A
    negative prediction never vetoes co-membership reached through a chain
    of positives.
    """
    uf = UnionFind(all_members)
    for pred in predictions:
        if pred.is_flock:
            uf.union(pred.agent_a, pred.agent_b)
    flocks = []
    singletons = []
    for component in uf.components():
        if len(component) >= 2:
            flocks.append(tuple(component))
        else:
            singletons.append(component[0])
    flocks.sort(key=lambda f: f[0])
    return FlockSet(flocks=tuple(flocks), singletons=tuple(sorted(singletons)))


def size_histogram(flocksets: Iterable[FlockSet]) -> dict[int, int]:
    """Flock-size counts pooled over scenes; singletons are not counted."""
    histogram: dict[int, int] = {}
    for fs in flocksets:
        for size in fs.flock_sizes():
            histogram[size] = histogram.get(size, 0) + 1
    return dict(sorted(histogram.items()))


def histogram_report(histogram: Mapping[int, int]) -> dict[str, int]:
    """The published `"size": count` shape (string keys)."""
    return {str(size): int(count) for size, count in sorted(histogram.items())}


@dataclass(frozen=True)
class ValidationMetrics:
    """Agreement between detected flocks and annotated groups."""

    n_truth_groups: int
    n_exact_matches: int
    exact_match_rate: float
    pair_true_positives: int
    pair_false_positives: int
    pair_false_negatives: int
    precision: float
    recall: float
    f1: float
    notes: tuple[str, ...] = ()


def _truth_groups(truth: Iterable[GroupAnnotation],
                  universe: frozenset[int]) -> list[frozenset[int]]:
    groups = {ann.member_ids for ann in truth}
    return [g for g in groups if g <= universe]


def validate_against_annotations(detected: FlockSet,
                                 truth: Iterable[GroupAnnotation]) -> ValidationMetrics:
    """Exact-match rate plus pairwise precision/recall/F1 over co-membership.

    Truth groups are the deduplicated annotated member sets that lie fully
    inside the detected partition's universe. A pair counts positive iff
    both agents share a flock (detected side) or a group (truth side).
    Degenerate conventions: with zero predicted positives precision is
    reported as 1.0 (flagged); with zero truth groups the exact-match rate
    is vacuously 1.0 (flagged).
    """
    universe = detected.members
    truth_groups = _truth_groups(truth, universe)
    notes = []

    detected_sets = [frozenset(f) for f in detected.flocks]
    n_exact = sum(1 for g in truth_groups if g in detected_sets)
    if truth_groups:
        exact_rate = n_exact / len(truth_groups)
    else:
        exact_rate = 1.0
        notes.append("no truth groups inside scene; exact-match vacuously 1.0")

    truth_pairs: set[tuple[int, int]] = set()
    for group in truth_groups:
        truth_pairs.update(canonical_pair(a, b) for a, b in combinations(sorted(group), 2))
    detected_pairs: set[tuple[int, int]] = set()
    for flock in detected.flocks:
        detected_pairs.update(canonical_pair(a, b) for a, b in combinations(flock, 2))

    tp = len(truth_pairs & detected_pairs)
    fp = len(detected_pairs - truth_pairs)
    fn = len(truth_pairs - detected_pairs)
    if tp + fp == 0:
        precision = 1.0
        notes.append("zero predicted positive pairs; precision reported as 1.0")
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 1.0
        notes.append("zero truth positive pairs; recall reported as 1.0")
    else:
        recall = tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)

    return ValidationMetrics(
        n_truth_groups=len(truth_groups),
        n_exact_matches=n_exact,
        exact_match_rate=exact_rate,
        pair_true_positives=tp,
        pair_false_positives=fp,
        pair_false_negatives=fn,
        precision=precision,
        recall=recall,
        f1=f1,
        notes=tuple(notes),
    )


def combine_metrics(per_scene: list[ValidationMetrics]) -> ValidationMetrics:
    """Micro-average scene metrics (pool pair counts and group counts)."""
    n_truth = sum(m.n_truth_groups for m in per_scene)
    n_exact = sum(m.n_exact_matches for m in per_scene)
    tp = sum(m.pair_true_positives for m in per_scene)
    fp = sum(m.pair_false_positives for m in per_scene)
    fn = sum(m.pair_false_negatives for m in per_scene)
    notes = []
    exact = n_exact / n_truth if n_truth else 1.0
    if not n_truth:
        notes.append("no truth groups in any scene; exact-match vacuously 1.0")
    precision = tp / (tp + fp) if tp + fp else 1.0
    if not tp + fp:
        notes.append("zero predicted positive pairs; precision reported as 1.0")
    recall = tp / (tp + fn) if tp + fn else 1.0
    if not tp + fn:
        notes.append("zero truth positive pairs; recall reported as 1.0")
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return ValidationMetrics(
        n_truth_groups=n_truth,
        n_exact_matches=n_exact,
        exact_match_rate=exact,
        pair_true_positives=tp,
        pair_false_positives=fp,
        pair_false_negatives=fn,
        precision=precision,
        recall=recall,
        f1=f1,
        notes=tuple(notes),
    )
