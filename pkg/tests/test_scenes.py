import io
import math

import numpy as np
import pytest

from flockdetect.core import Trajectory, TrajectoryPoint
from flockdetect.errors import CannotInterpolate, InsufficientNegatives, InvalidBinWidth
from flockdetect.ingest import Dataset, SyntheticConfig, generate_synthetic
from flockdetect.scenes import (
    PairDatasetSpec,
    RawPairSample,
    _blend_points,
    assign_time_bins,
    build_pair_dataset,
    fill_sequence_blocks,
    interpolate_synthetic_positives,
    read_pair_dataset,
    read_scene_file,
    write_pair_dataset,
    write_scene_file,
)

from conftest import make_block


def dataset_of(blocks: dict[int, tuple]) -> Dataset:
    return Dataset(trajectories={a: Trajectory(a, pts) for a, pts in blocks.items()})


class TestAssignTimeBins:
    def test_first_agent_lands_in_bin_zero(self):
        ds = dataset_of({1: make_block(1, 5, t0=1000)})
        bins = assign_time_bins(ds, 60_000, 2)
        assert [b.bin_index for b in bins] == [0]
        assert bins[0].bin_start_ms == 1000

    def test_boundary_goes_to_next_bin(self):
        ds = dataset_of({
            1: make_block(1, 5, t0=1000),
            2: make_block(2, 5, t0=61_000),
        })
        bins = assign_time_bins(ds, 60_000, 2)
        assert [(b.bin_index, b.member_ids) for b in bins] == [(0, (1,)), (1, (2,))]

    def test_short_agents_excluded(self):
        ds = dataset_of({
            1: make_block(1, 4, t0=1000),
            2: make_block(2, 3, t0=1000),
        })
        bins = assign_time_bins(ds, 60_000, 4)
        assert bins[0].member_ids == (1,)

    def test_invalid_bin_width(self):
        ds = dataset_of({1: make_block(1, 5)})
        with pytest.raises(InvalidBinWidth):
            assign_time_bins(ds, 0, 2)

    def test_partition_and_recomputed_index(self):
        rng = np.random.default_rng(5)
        blocks = {}
        for agent in range(40):
            t0 = int(rng.integers(0, 500_000))
            n = int(rng.integers(2, 30))
            blocks[agent] = make_block(agent, n, t0=t0)
        ds = dataset_of(blocks)
        L, T = 10, 45_000
        bins = assign_time_bins(ds, T, L)
        retained = [a for a, b in blocks.items() if len(b) >= L]
        assert sum(len(b.member_ids) for b in bins) == len(retained)
        seen = [a for b in bins for a in b.member_ids]
        assert sorted(seen) == sorted(retained)
        t_min = min(blocks[a][0].timestamp_ms for a in retained)
        for b in bins:
            assert b.bin_start_ms == t_min + b.bin_index * T
            for agent in b.member_ids:
                t_first = blocks[agent][0].timestamp_ms
                assert (t_first - t_min) // T == b.bin_index

    def test_members_sorted_by_time_then_id(self):
        ds = dataset_of({
            3: make_block(3, 5, t0=2000),
            1: make_block(1, 5, t0=3000),
            2: make_block(2, 5, t0=2000),
        })
        bins = assign_time_bins(ds, 60_000, 2)
        assert bins[0].member_ids == (2, 3, 1)


class TestFillSequenceBlocks:
    def test_exact_length_block(self):
        ds = dataset_of({1: make_block(1, 4)})
        bins = assign_time_bins(ds, 60_000, 4)
        filled, diags = fill_sequence_blocks(ds, bins, 4)
        assert diags == []
        assert len(filled[0].blocks[1]) == 4

    def test_prefix_rule_for_long_agent(self):
        block = make_block(1, 8)
        ds = dataset_of({1: block})
        bins = assign_time_bins(ds, 60_000, 4)
        filled, _ = fill_sequence_blocks(ds, bins, 4)
        assert filled[0].blocks[1] == block[:4]

    def test_bin_omitted_when_only_member_dropped(self):
        ds = dataset_of({1: make_block(1, 6)})
        bins = assign_time_bins(ds, 60_000, 4)
        short_ds = dataset_of({1: make_block(1, 2)})
        filled, diags = fill_sequence_blocks(short_ds, bins, 4)
        assert filled == []
        assert len(diags) == 1


def synthetic_pairs_dataset(n_pairs=10, n_singletons=25, seed=0):
    cfg = SyntheticConfig(
        n_flocks=n_pairs, flock_size_distribution=((2, 1.0),),
        n_singletons=n_singletons, duration_ms=10_000, sample_period_ms=500,
        rng_seed=seed)
    return generate_synthetic(cfg)


class TestBuildPairDataset:
    def test_counts_and_split(self):
        ds = synthetic_pairs_dataset()
        spec = PairDatasetSpec(sequence_length_L=10, rng_seed=0)
        train, test = build_pair_dataset(ds, spec)
        assert len(train) + len(test) == 20
        assert len(train) == 16
        assert len(test) == 4
        assert sum(s.label for s in train) == 8
        assert sum(s.label for s in test) == 2

    def test_empty_dataset_is_vacuous(self):
        ds = Dataset(trajectories={})
        train, test = build_pair_dataset(ds, PairDatasetSpec(sequence_length_L=5))
        assert (train, test) == ([], [])

    def test_deterministic_under_seed(self):
        ds = synthetic_pairs_dataset()
        spec = PairDatasetSpec(sequence_length_L=10, rng_seed=9)
        first = build_pair_dataset(ds, spec)
        second = build_pair_dataset(ds, spec)
        assert first == second

    def test_insufficient_negatives(self):
        ds = synthetic_pairs_dataset(n_pairs=10, n_singletons=3)
        spec = PairDatasetSpec(sequence_length_L=10, rng_seed=0)
        with pytest.raises(InsufficientNegatives) as err:
            build_pair_dataset(ds, spec)
        assert err.value.available == 3

    def test_negatives_drawn_from_singletons_only(self):
        ds = synthetic_pairs_dataset()
        grouped = {m for g in ds.groups for m in g.member_ids}
        train, test = build_pair_dataset(ds, PairDatasetSpec(sequence_length_L=10))
        for s in train + test:
            if s.label == 0:
                assert s.agent_a not in grouped
                assert s.agent_b not in grouped

    def test_blocks_trimmed_to_length(self):
        ds = synthetic_pairs_dataset()
        train, test = build_pair_dataset(ds, PairDatasetSpec(sequence_length_L=7))
        for s in train + test:
            assert len(s.block_a) == 7
            assert len(s.block_b) == 7

    def test_splits_disjoint_and_complete(self):
        ds = synthetic_pairs_dataset()
        train, test = build_pair_dataset(ds, PairDatasetSpec(sequence_length_L=10))
        train_keys = {(s.agent_a, s.agent_b) for s in train}
        test_keys = {(s.agent_a, s.agent_b) for s in test}
        assert not train_keys & test_keys

    def test_oversample_balances_train(self):
        ds = synthetic_pairs_dataset(n_pairs=6, n_singletons=30)
        spec = PairDatasetSpec(sequence_length_L=10, negative_ratio=2.0,
                               balance_strategy="oversample", rng_seed=1)
        train, _ = build_pair_dataset(ds, spec)
        labels = [s.label for s in train]
        assert labels.count(0) == labels.count(1)

    def test_undersample_balances_train(self):
        ds = synthetic_pairs_dataset(n_pairs=6, n_singletons=30)
        spec = PairDatasetSpec(sequence_length_L=10, negative_ratio=2.0,
                               balance_strategy="undersample", rng_seed=1)
        train, _ = build_pair_dataset(ds, spec)
        labels = [s.label for s in train]
        assert labels.count(0) == labels.count(1)

    def test_interpolation_balances_with_synthetic_positives(self):
        ds = synthetic_pairs_dataset(n_pairs=6, n_singletons=30)
        spec = PairDatasetSpec(sequence_length_L=10, negative_ratio=2.0,
                               balance_strategy="synthetic_interpolation", rng_seed=1)
        train, _ = build_pair_dataset(ds, spec)
        labels = [s.label for s in train]
        assert labels.count(0) == labels.count(1)
        assert any(s.synthetic for s in train)


class TestInterpolation:
    def _positive(self, agent_a=1, agent_b=2, **kwargs):
        return RawPairSample(agent_a, agent_b,
                             make_block(agent_a, 5, **kwargs),
                             make_block(agent_b, 5, x0=500.0, **kwargs), 1)

    def test_identical_parents_reproduce_themselves(self):
        sample = self._positive()
        out = interpolate_synthetic_positives([sample, sample], 3, rng_seed=0)
        for new in out:
            for p, q in zip(new.block_a, sample.block_a):
                assert p.x_mm == pytest.approx(q.x_mm)
                assert p.timestamp_ms == q.timestamp_ms
            assert new.synthetic

    def test_k_zero(self):
        sample = self._positive()
        assert interpolate_synthetic_positives([sample, sample], 0, rng_seed=0) == []

    def test_needs_two_positives(self):
        with pytest.raises(CannotInterpolate):
            interpolate_synthetic_positives([self._positive()], 1, rng_seed=0)

    def test_midpoint_blend(self):
        p = TrajectoryPoint(0, 1, 0.0, 0.0, 100.0, 0.0, 0.0)
        q = TrajectoryPoint(100, 1, 2.0, 2.0, 300.0, 1.0, -1.0)
        mid = _blend_points(p, q, 0.5)
        assert (mid.x_mm, mid.y_mm) == (1.0, 1.0)
        assert mid.timestamp_ms == 50
        assert mid.velocity_mm_s == 200.0
        assert mid.motion_angle_rad == pytest.approx(0.5)
        assert mid.face_angle_rad == pytest.approx(-0.5)

    def test_angle_blend_takes_shortest_arc(self):
        p = TrajectoryPoint(0, 1, 0.0, 0.0, 1.0, 3.0, 3.0)
        q = TrajectoryPoint(0, 1, 0.0, 0.0, 1.0, -3.0, -3.0)
        mid = _blend_points(p, q, 0.5)
        # Halfway between 3.0 and -3.0 through the wrap is +-pi, not 0.
        assert abs(mid.motion_angle_rad) == pytest.approx(math.pi, abs=1e-9)

    def test_convexity_bounds_on_linear_fields(self):
        a = self._positive()
        b = RawPairSample(1, 2,
                          make_block(1, 5, x0=1000.0, velocity=2000.0),
                          make_block(2, 5, x0=1500.0, velocity=2000.0), 1)
        out = interpolate_synthetic_positives([a, b], 20, rng_seed=4)
        for new in out:
            for k, p in enumerate(new.block_a):
                lo = min(a.block_a[k].x_mm, b.block_a[k].x_mm)
                hi = max(a.block_a[k].x_mm, b.block_a[k].x_mm)
                assert lo - 1e-9 <= p.x_mm <= hi + 1e-9


class TestSceneIO:
    def test_scene_round_trip(self, small_dataset):
        bins = assign_time_bins(small_dataset, 30_000, 10)
        filled, _ = fill_sequence_blocks(small_dataset, bins, 10)
        scene = filled[0]
        buf = io.StringIO()
        write_scene_file(scene, buf)
        parsed = read_scene_file(io.StringIO(buf.getvalue()))
        assert parsed == scene

    def test_rejects_foreign_file(self):
        with pytest.raises(ValueError):
            read_scene_file(io.StringIO("not a scene\n"))


class TestPairDatasetIO:
    def test_round_trip(self, tmp_path, small_dataset):
        spec = PairDatasetSpec(sequence_length_L=10, rng_seed=2)
        train, test = build_pair_dataset(small_dataset, spec)
        data_path, manifest_path = write_pair_dataset(train, test, tmp_path)
        r_train, r_test, L = read_pair_dataset(data_path)
        assert L == 10
        assert r_train == train
        assert r_test == test
        manifest = manifest_path.read_text().splitlines()
        assert manifest[0] == "sample_id,agent_a,agent_b,label,split,synthetic"
        assert len(manifest) == 1 + len(train) + len(test)
