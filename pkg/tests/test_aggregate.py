import itertools
import warnings

import numpy as np
import pytest

from flockdetect.aggregate import (
    FlockSet,
    PairPrediction,
    UnionFind,
    aggregate_flocks,
    combine_metrics,
    evaluate_all_pairs,
    histogram_report,
    size_histogram,
    validate_against_annotations,
)
from flockdetect.core import GroupAnnotation
from flockdetect.errors import ConfigMismatch
from flockdetect.features import featurize_pair, fit_scalers, PairSample
from flockdetect.scenes import SceneBin
from flockdetect.seqnet import ModelConfig, SequenceModel

from conftest import make_block


def predictions(*edges, members=None):
    out = []
    for a, b, flag in edges:
        out.append(PairPrediction(min(a, b), max(a, b), 0.99 if flag else 0.01, flag))
    return out


def brute_force_components(members, positive_edges):
    """Reference connected components by breadth-first search."""
    adjacency = {m: set() for m in members}
    for a, b in positive_edges:
        adjacency[a].add(b)
        adjacency[b].add(a)
    seen = set()
    components = []
    for start in members:
        if start in seen:
            continue
        frontier = [start]
        component = set()
        while frontier:
            node = frontier.pop()
            if node in component:
                continue
            component.add(node)
            frontier.extend(adjacency[node] - component)
        seen |= component
        components.append(frozenset(component))
    return set(components)


class TestUnionFind:
    def test_fresh_element_is_own_root(self):
        uf = UnionFind()
        assert uf.find_root(42) == 42

    def test_chain_compression(self):
        uf = UnionFind()
        uf.parent = {1: 2, 2: 3, 3: 3}
        assert uf.find_root(1) == 3
        assert uf.parent[1] == 3
        assert uf.parent[2] == 3

    def test_second_find_is_direct(self):
        uf = UnionFind()
        uf.parent = {k: k + 1 for k in range(100)}
        uf.parent[100] = 100
        uf.find_root(0)
        # after compression, the walked chain points straight at the root
        assert uf.parent[0] == 100
        assert uf.parent[50] == 100

    def test_union_reflexive_noop(self):
        uf = UnionFind([1])
        uf.union(1, 1)
        assert uf.find_root(1) == 1

    def test_union_transitivity_with_min_root(self):
        uf = UnionFind()
        uf.union(1, 2)
        uf.union(2, 3)
        assert {uf.find_root(k) for k in (1, 2, 3)} == {1}

    def test_union_order_independent(self):
        edges = [(1, 5), (5, 9), (2, 9), (7, 8)]
        partitions = []
        roots = []
        for order in itertools.permutations(edges):
            uf = UnionFind(range(1, 10))
            for a, b in order:
                uf.union(a, b)
            partitions.append({frozenset(c) for c in uf.components()})
            roots.append(sorted(uf.find_root(k) for k in range(1, 10)))
        assert all(p == partitions[0] for p in partitions)
        assert all(r == roots[0] for r in roots)


class TestAggregateFlocks:
    def test_hand_example(self):
        preds = predictions((1, 2, 1), (2, 3, 1), (4, 5, 0))
        flockset = aggregate_flocks(preds, [1, 2, 3, 4, 5])
        assert flockset.flocks == ((1, 2, 3),)
        assert flockset.singletons == (4, 5)

    def test_all_negative(self):
        preds = predictions((1, 2, 0), (2, 3, 0))
        flockset = aggregate_flocks(preds, [1, 2, 3])
        assert flockset.flocks == ()
        assert flockset.singletons == (1, 2, 3)

    def test_complete_graph_single_flock(self):
        for k in (2, 5, 9):
            members = list(range(1, k + 1))
            preds = predictions(*[(a, b, 1) for a, b in itertools.combinations(members, 2)])
            flockset = aggregate_flocks(preds, members)
            assert flockset.flocks == (tuple(members),)

    def test_matches_brute_force_on_random_graphs(self):
        rng = np.random.default_rng(0)
        for _ in range(150):
            n = int(rng.integers(1, 13))
            members = list(range(n))
            edges = list(itertools.combinations(members, 2))
            flags = rng.random(len(edges)) < 0.25
            preds = predictions(*[(a, b, int(f)) for (a, b), f in zip(edges, flags)])
            flockset = aggregate_flocks(preds, members)
            got = {frozenset(f) for f in flockset.flocks}
            got |= {frozenset({s}) for s in flockset.singletons}
            expected = brute_force_components(
                members, [e for e, f in zip(edges, flags) if f])
            assert got == expected

    def test_monotone_in_added_edges(self):
        rng = np.random.default_rng(1)
        members = list(range(10))
        edges = list(itertools.combinations(members, 2))
        rng.shuffle(edges)
        sizes = {m: 1 for m in members}
        positive = []
        for edge in edges[:20]:
            positive.append(edge)
            preds = predictions(*[(a, b, 1) for a, b in positive])
            flockset = aggregate_flocks(preds, members)
            new_sizes = {m: 1 for m in members}
            for flock in flockset.flocks:
                for m in flock:
                    new_sizes[m] = len(flock)
            for m in members:
                assert new_sizes[m] >= sizes[m]
            sizes = new_sizes

    def test_partition_invariant(self):
        preds = predictions((1, 2, 1), (3, 4, 1))
        flockset = aggregate_flocks(preds, [1, 2, 3, 4, 5])
        members = [m for f in flockset.flocks for m in f] + list(flockset.singletons)
        assert sorted(members) == [1, 2, 3, 4, 5]


def scene_of(n_agents, length=6):
    blocks = {}
    for agent in range(1, n_agents + 1):
        blocks[agent] = make_block(agent, length, x0=agent * 3000.0,
                                   y0=agent * 500.0)
    return SceneBin(bin_index=0, bin_start_ms=1_000_000, bin_width_ms=60_000,
                    sequence_length=length, member_ids=tuple(blocks),
                    blocks=blocks)


def untrained_model(length=6):
    model = SequenceModel.create(ModelConfig(arch="rnn", hidden_size=8, seed=0))
    scene = scene_of(3, length)
    feats = featurize_pair(scene.blocks[1], scene.blocks[2])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # constant columns
        model.scaler = fit_scalers([PairSample(1, 2, feats, 1)])
    return model


class TestEvaluateAllPairs:
    def test_single_member_yields_no_pairs(self):
        assert evaluate_all_pairs(untrained_model(), scene_of(1), 0.5) == []

    def test_pair_count_is_n_choose_2(self):
        preds = evaluate_all_pairs(untrained_model(), scene_of(4), 0.5)
        assert len(preds) == 6
        assert [p.pair for p in preds] == sorted(p.pair for p in preds)
        assert all(p.agent_a < p.agent_b for p in preds)

    def test_deterministic(self):
        model = untrained_model()
        scene = scene_of(5)
        first = evaluate_all_pairs(model, scene, 0.5)
        second = evaluate_all_pairs(model, scene, 0.5)
        assert first == second

    def test_is_flock_consistent_with_threshold(self):
        preds = evaluate_all_pairs(untrained_model(), scene_of(5), 0.5)
        for p in preds:
            assert p.is_flock == (1 if p.probability >= 0.5 else 0)

    def test_sequence_length_mismatch_rejected(self):
        model = untrained_model()
        model.meta.trained_sequence_length = 10
        with pytest.raises(ConfigMismatch):
            evaluate_all_pairs(model, scene_of(3, length=6), 0.5)

    def test_missing_scaler_rejected(self):
        model = SequenceModel.create(ModelConfig(arch="rnn", hidden_size=8, seed=0))
        with pytest.raises(ConfigMismatch):
            evaluate_all_pairs(model, scene_of(3), 0.5)


class TestFlockSet:
    def test_rejects_undersized_flock(self):
        with pytest.raises(ValueError):
            FlockSet(flocks=((1,),), singletons=())

    def test_rejects_duplicate_membership(self):
        with pytest.raises(ValueError):
            FlockSet(flocks=((1, 2),), singletons=(2,))

    def test_rejects_unsorted_members(self):
        with pytest.raises(ValueError):
            FlockSet(flocks=((2, 1),), singletons=())


class TestSizeHistogram:
    def test_counts(self):
        fs = FlockSet(flocks=((1, 2, 3), (4, 5)), singletons=(9,))
        assert size_histogram([fs]) == {2: 1, 3: 1}

    def test_empty(self):
        assert size_histogram([]) == {}

    def test_pools_across_scenes(self):
        a = FlockSet(flocks=((1, 2),), singletons=())
        b = FlockSet(flocks=((3, 4), (5, 6, 7)), singletons=())
        assert size_histogram([a, b]) == {2: 2, 3: 1}

    def test_report_shape_uses_string_keys(self):
        report = histogram_report({2: 1528, 3: 448, 11: 1})
        assert report == {"2": 1528, "3": 448, "11": 1}
        assert all(isinstance(k, str) and k.isdigit() for k in report)
        assert all(isinstance(v, int) for v in report.values())


def annotations_for(groups):
    out = []
    for members in groups:
        members = sorted(members)
        for pid in members:
            partners = tuple(m for m in members if m != pid)
            out.append(GroupAnnotation(pid, len(members), partners, 0, ()))
    return out


class TestValidation:
    def test_exact_detection(self):
        truth = annotations_for([(1, 2), (3, 4, 5)])
        detected = FlockSet(flocks=((1, 2), (3, 4, 5)), singletons=(6,))
        m = validate_against_annotations(detected, truth)
        assert m.exact_match_rate == 1.0
        assert m.f1 == 1.0

    def test_split_group_recall(self):
        # size-4 group split into two pairs keeps 2 of 6 co-membership pairs
        truth = annotations_for([(1, 2, 3, 4)])
        detected = FlockSet(flocks=((1, 2), (3, 4)), singletons=())
        m = validate_against_annotations(detected, truth)
        assert m.exact_match_rate == 0.0
        assert m.recall == pytest.approx(2 / 6)
        assert m.precision == 1.0

    def test_no_detections_convention(self):
        truth = annotations_for([(1, 2)])
        detected = FlockSet(flocks=(), singletons=(1, 2))
        m = validate_against_annotations(detected, truth)
        assert m.precision == 1.0
        assert m.recall == 0.0
        assert any("zero predicted" in note for note in m.notes)

    def test_empty_truth_vacuous(self):
        detected = FlockSet(flocks=((1, 2),), singletons=())
        m = validate_against_annotations(detected, [])
        assert m.exact_match_rate == 1.0
        assert any("vacuously" in note for note in m.notes)

    def test_truth_outside_universe_ignored(self):
        truth = annotations_for([(1, 2), (7, 8)])
        detected = FlockSet(flocks=((1, 2),), singletons=(3,))
        m = validate_against_annotations(detected, truth)
        assert m.n_truth_groups == 1
        assert m.exact_match_rate == 1.0

    def test_combine_micro_averages(self):
        truth = annotations_for([(1, 2, 3, 4)])
        split = validate_against_annotations(
            FlockSet(flocks=((1, 2), (3, 4)), singletons=()), truth)
        exact = validate_against_annotations(
            FlockSet(flocks=((1, 2, 3, 4),), singletons=()), truth)
        overall = combine_metrics([split, exact])
        assert overall.n_truth_groups == 2
        assert overall.n_exact_matches == 1
        assert overall.recall == pytest.approx((2 + 6) / 12)
