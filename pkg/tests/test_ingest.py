import io

import numpy as np
import pytest

from flockdetect.errors import IngestFailure
from flockdetect.ingest import (
    SyntheticConfig,
    extract_pair_labels,
    generate_synthetic,
    list_singletons,
    load_dataset,
    parse_group_file,
    parse_synthetic_config,
    parse_trajectory_csv,
    write_group_file,
    write_trajectory_csv,
)


class TestParseTrajectoryCsv:
    def test_field_mapping(self):
        ds = parse_trajectory_csv(io.StringIO("1368000000.5,42,1000,2000,1200,0.5,0.4\n"))
        point = ds.trajectories[42].points[0]
        assert point.timestamp_ms == 1368000000500
        assert point.agent_id == 42
        assert point.x_mm == 1000.0
        assert point.y_mm == 2000.0
        assert point.velocity_mm_s == 1200.0
        assert point.motion_angle_rad == 0.5
        assert point.face_angle_rad == 0.4

    def test_empty_stream(self):
        ds = parse_trajectory_csv(io.StringIO(""))
        assert ds.trajectories == {}
        assert ds.diagnostics == ()

    def test_rows_grouped_and_sorted(self):
        text = ("1368000001.0,7,0,0,1,0,0\n"
                "1368000000.0,7,1,1,1,0,0\n")
        ds = parse_trajectory_csv(io.StringIO(text))
        stamps = [p.timestamp_ms for p in ds.trajectories[7].points]
        assert stamps == [1368000000000, 1368000001000]

    def test_header_autodetected(self):
        text = "time,person_id,x,y,v,motion,face\n1.0,9,0,0,1,0,0\n"
        ds = parse_trajectory_csv(io.StringIO(text))
        assert list(ds.trajectories) == [9]
        assert any("header" in d for d in ds.diagnostics)

    def test_duplicate_timestamp_dropped_with_diagnostic(self):
        text = ("1.0,7,0,0,1,0,0\n"
                "1.0,7,9,9,1,0,0\n")
        ds = parse_trajectory_csv(io.StringIO(text))
        assert len(ds.trajectories[7]) == 1
        assert ds.trajectories[7].points[0].x_mm == 0.0
        assert any("DuplicateRecord" in d for d in ds.diagnostics)

    def test_wrong_column_count_reported_with_line_number(self):
        rows = [f"{i}.0,1,0,0,1,0,0" for i in range(300)]
        rows[137] = "bad,row"
        ds = parse_trajectory_csv(io.StringIO("\n".join(rows)))
        assert any("line 138" in d for d in ds.diagnostics)

    def test_too_many_bad_rows_fails(self):
        rows = [f"{i}.0,1,0,0,1,0,0" for i in range(100)]
        rows[10] = "x"
        rows[11] = "y"
        rows[12] = "z"
        with pytest.raises(IngestFailure) as err:
            parse_trajectory_csv(io.StringIO("\n".join(rows)))
        assert err.value.bad_lines == [11, 12, 13]

    def test_fractional_ms_rounds_half_up(self):
        ds = parse_trajectory_csv(io.StringIO("0.0015,1,0,0,1,0,0\n"))
        assert ds.trajectories[1].points[0].timestamp_ms == 2


class TestParseGroupFile:
    def test_pair_row(self):
        groups, diags = parse_group_file(io.StringIO("10 2 11 1 11\n"))
        assert diags == []
        (ann,) = groups
        assert ann.pedestrian_id == 10
        assert ann.group_size == 2
        assert ann.partner_ids == (11,)
        assert ann.interacting_count == 1
        assert ann.interacting_ids == (11,)

    def test_zero_interacting(self):
        groups, _ = parse_group_file(io.StringIO("10 3 11 12 0\n"))
        (ann,) = groups
        assert ann.partner_ids == (11, 12)
        assert ann.interacting_ids == ()

    def test_short_partner_list_is_malformed(self):
        groups, diags = parse_group_file(io.StringIO("10 3 11 0\n"))
        assert groups == []
        assert len(diags) == 1
        assert "MalformedGroupRow" in diags[0]


class TestPairLabelsAndSingletons:
    def test_mirrored_pair_collapses(self):
        ds = load_dataset(
            io.StringIO("1.0,10,0,0,1,0,0\n1.0,11,5,5,1,0,0\n"),
            io.StringIO("10 2 11 1 11\n11 2 10 1 10\n"),
        )
        labels = extract_pair_labels(ds)
        assert [(l.agent_a, l.agent_b, l.label) for l in labels] == [(10, 11, 1)]

    def test_size_three_group_excluded(self):
        ds = load_dataset(
            io.StringIO("1.0,10,0,0,1,0,0\n"),
            io.StringIO("10 3 11 12 0\n"),
        )
        assert extract_pair_labels(ds) == []

    def test_empty_groups(self):
        ds = load_dataset(io.StringIO("1.0,10,0,0,1,0,0\n"), io.StringIO(""))
        assert extract_pair_labels(ds) == []

    def test_singletons_are_unannotated_agents(self):
        ds = load_dataset(
            io.StringIO("1.0,1,0,0,1,0,0\n1.0,2,1,1,1,0,0\n1.0,3,2,2,1,0,0\n"),
            io.StringIO("1 2 2 0\n2 2 1 0\n"),
        )
        assert list_singletons(ds) == [3]

    def test_all_agents_grouped(self):
        ds = load_dataset(
            io.StringIO("1.0,1,0,0,1,0,0\n1.0,2,1,1,1,0,0\n"),
            io.StringIO("1 2 2 0\n2 2 1 0\n"),
        )
        assert list_singletons(ds) == []

    def test_no_groups_all_singletons(self):
        ds = load_dataset(io.StringIO("1.0,1,0,0,1,0,0\n1.0,2,1,1,1,0,0\n"))
        assert list_singletons(ds) == [1, 2]

    def test_unresolved_partner_recorded(self):
        ds = load_dataset(
            io.StringIO("1.0,10,0,0,1,0,0\n"),
            io.StringIO("10 2 99 0\n"),
        )
        assert 99 in ds.unresolved_ids

    def test_one_sided_annotation_accepted_with_diagnostic(self):
        ds = load_dataset(
            io.StringIO("1.0,10,0,0,1,0,0\n1.0,11,1,1,1,0,0\n"),
            io.StringIO("10 2 11 1 11\n"),
        )
        assert len(ds.groups) == 1
        assert any("one-sided" in d for d in ds.diagnostics)


class TestRoundTrip:
    def test_fixture_round_trip(self, tracks_fixture_path, groups_fixture_path):
        ds = load_dataset(tracks_fixture_path, groups_fixture_path)

        traj_out = io.StringIO()
        write_trajectory_csv(ds, traj_out)
        reparsed = parse_trajectory_csv(io.StringIO(traj_out.getvalue()))
        assert reparsed.trajectories == ds.trajectories

        group_out = io.StringIO()
        write_group_file(ds.groups, group_out)
        regroups, rediags = parse_group_file(io.StringIO(group_out.getvalue()))
        assert rediags == []
        assert tuple(regroups) == ds.groups


class TestGenerateSynthetic:
    def test_counts(self):
        cfg = SyntheticConfig(n_flocks=1, flock_size_distribution=((2, 1.0),),
                              n_singletons=0, rng_seed=7)
        ds = generate_synthetic(cfg)
        assert len(ds.trajectories) == 2
        assert len({ann.member_ids for ann in ds.groups}) == 1

    def test_no_flocks(self):
        cfg = SyntheticConfig(n_flocks=0, n_singletons=5, rng_seed=3)
        ds = generate_synthetic(cfg)
        assert len(ds.trajectories) == 5
        assert ds.groups == ()

    def test_deterministic_for_seed(self):
        cfg = SyntheticConfig(n_flocks=2, n_singletons=3, rng_seed=42)
        first, second = generate_synthetic(cfg), generate_synthetic(cfg)
        out_a, out_b = io.StringIO(), io.StringIO()
        write_trajectory_csv(first, out_a)
        write_trajectory_csv(second, out_b)
        assert out_a.getvalue() == out_b.getvalue()
        assert first.groups == second.groups

    def test_seed_changes_output(self):
        base = SyntheticConfig(n_flocks=2, n_singletons=3, rng_seed=1)
        other = SyntheticConfig(n_flocks=2, n_singletons=3, rng_seed=2)
        assert generate_synthetic(base).trajectories != generate_synthetic(other).trajectories

    def test_cohesion_invariant(self):
        cfg = SyntheticConfig(n_flocks=6, flock_size_distribution=((2, 1.0), (4, 1.0)),
                              n_singletons=0, noise_std_mm=400.0,
                              cohesion_radius_mm=1500.0, rng_seed=9)
        ds = generate_synthetic(cfg)
        for members in {ann.member_ids for ann in ds.groups}:
            tracks = [ds.trajectories[m] for m in sorted(members)]
            xs = np.array([[p.x_mm for p in t.points] for t in tracks])
            ys = np.array([[p.y_mm for p in t.points] for t in tracks])
            cx, cy = xs.mean(axis=0), ys.mean(axis=0)
            dist = np.hypot(xs - cx, ys - cy)
            assert dist.max() <= cfg.cohesion_radius_mm

    def test_agents_have_expected_point_count(self):
        cfg = SyntheticConfig(n_flocks=1, n_singletons=1, duration_ms=10_000,
                              sample_period_ms=500, rng_seed=0)
        ds = generate_synthetic(cfg)
        for traj in ds.trajectories.values():
            assert len(traj) == 21


class TestSyntheticConfigFile:
    def test_parse_key_value_file(self, tmp_path):
        path = tmp_path / "synth.cfg"
        path.write_text(
            "n_flocks = 4\n"
            "flock_size_distribution = 2:1.0,3:0.5\n"
            "n_singletons = 6\n"
            "duration_ms = 20000\n"
            "sample_period_ms = 250\n"
            "cohesion_radius_mm = 1800.5\n"
            "noise_std_mm = 25\n"
            "rng_seed = 13\n",
            encoding="utf-8")
        cfg = parse_synthetic_config(path)
        assert cfg.n_flocks == 4
        assert cfg.flock_size_distribution == ((2, 1.0), (3, 0.5))
        assert cfg.cohesion_radius_mm == 1800.5
        assert cfg.rng_seed == 13
