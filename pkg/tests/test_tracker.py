from __future__ import annotations

import numpy as np
import pytest

import oracles
from stormlink.tracker import (
    STATE_ACTIVE,
    STATE_FINISHED,
    STATE_LOST,
    ByteParams,
    Detection,
    Track,
    apply_physical_filters,
    byte_step,
    center_box,
    iou,
    predict_box,
    read_tracks,
    run_tracker,
    solve_assignment,
    write_tracks,
)
from stormlink.timeutil import parse_time

T = [parse_time("1995-08-01T00:00:00Z")]
while len(T) < 60:
    from datetime import timedelta

    T.append(T[-1] + timedelta(hours=6))


def det(step: int, row: float, col: float, score: float = 0.9) -> Detection:
    return Detection.from_cell(T[step], row, col, score)


def track_from(cells: list[tuple[int, float, float]], track_id=1, score=0.9) -> Track:
    return Track(
        track_id=track_id,
        points=[det(s, r, c, score) for s, r, c in cells],
    )


class TestIoU:
    def test_identical_boxes(self):
        a = center_box(100, 200, 21)
        assert iou(a, a) == 1.0

    def test_offset_ten_ten(self):
        a = center_box(100, 200, 21)
        b = center_box(110, 210, 21)
        assert iou(a, b) == pytest.approx(121.0 / 761.0, abs=1e-12)

    def test_disjoint_boxes(self):
        assert iou(center_box(0, 0, 21), center_box(100, 100, 21)) == 0.0

    def test_touching_edges_zero(self):
        assert iou(center_box(0, 0, 20), center_box(0, 20, 20)) == 0.0


class TestAssignment:
    def test_empty_dimensions(self):
        res = solve_assignment(np.zeros((0, 3)), 1.0)
        assert res.matches == [] and res.unmatched_cols == [0, 1, 2]
        res = solve_assignment(np.zeros((2, 0)), 1.0)
        assert res.matches == [] and res.unmatched_rows == [0, 1]

    def test_forbidden_entries_stay_unmatched(self):
        cost = np.array([[0.1, 0.95], [0.95, 0.95]])
        res = solve_assignment(cost, max_cost=0.8)
        assert res.matches == [(0, 0)]
        assert res.unmatched_rows == [1]
        assert res.unmatched_cols == [1]

    def test_prefers_more_matches_over_cheaper_total(self):
        # (0,0)+(1,1) costs 1.0; the single match (0,1) would cost 0.05,
        # but match count dominates.
        cost = np.array([[0.5, 0.05], [2.0, 0.5]])
        res = solve_assignment(cost, max_cost=0.8)
        assert sorted(res.matches) == [(0, 0), (1, 1)]

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(77)
        for _ in range(300):
            n, m = rng.integers(1, 6), rng.integers(1, 6)
            cost = rng.uniform(0.0, 1.2, size=(n, m))
            res = solve_assignment(cost, max_cost=0.8)
            pairs, best = oracles.brute_force_assignment(cost.tolist(), 0.8)
            assert len(res.matches) == len(pairs)
            total = sum(cost[r, c] for r, c in res.matches)
            assert total == pytest.approx(best, abs=1e-9)

    def test_each_row_and_col_used_once(self):
        rng = np.random.default_rng(78)
        cost = rng.uniform(size=(5, 4))
        res = solve_assignment(cost, max_cost=1.0)
        rows = [r for r, _ in res.matches] + res.unmatched_rows
        cols = [c for _, c in res.matches] + res.unmatched_cols
        assert sorted(rows) == list(range(5))
        assert sorted(cols) == list(range(4))


class TestPredictBox:
    def test_constant_velocity_one_step(self):
        t = track_from([(0, 100, 200), (1, 104, 206)])
        box = predict_box(t, 21)
        assert box == center_box(108, 212, 21)

    def test_lost_track_extrapolates_further(self):
        t = track_from([(0, 100, 200), (1, 104, 206)])
        t.frames_since_match = 2  # missed two frames; predict 3 steps out
        assert predict_box(t, 21) == center_box(116, 224, 21)

    def test_single_point_stays_put(self):
        t = track_from([(0, 100, 200)])
        assert predict_box(t, 21) == center_box(100, 200, 21)

    def test_motion_none_stays_put(self):
        t = track_from([(0, 100, 200), (1, 104, 206)])
        assert predict_box(t, 21, motion="none") == center_box(104, 206, 21)

    def test_velocity_normalized_over_recovery_gap(self):
        # fixes at steps 0 and 2 (missed step 1): per-frame velocity is half
        t = track_from([(0, 100, 200), (2, 104, 206)])
        assert predict_box(t, 21) == center_box(106, 209, 21)


def step_params(**kw):
    defaults = dict(track_threshold=0.7, match_threshold=0.8, track_buffer=1,
                    low_score_floor=0.5, bbox_size=21, min_track_steps=12)
    defaults.update(kw)
    return ByteParams(**defaults)


class TestByteStep:
    def test_high_detection_extends_active_track(self):
        t = track_from([(0, 100, 200), (1, 100, 203)])
        alive, finished, nid = byte_step([t], [det(2, 100, 206, 0.9)], step_params(), 2)
        assert finished == []
        assert len(alive) == 1 and alive[0] is t
        assert len(t.points) == 3 and t.frames_since_match == 0

    def test_low_detection_reaches_leftover_active_track(self):
        t = track_from([(0, 100, 200), (1, 100, 203)])
        alive, _, nid = byte_step([t], [det(2, 100, 206, 0.6)], step_params(), 2)
        assert len(t.points) == 3
        assert nid == 2  # low score never founds a track

    def test_low_detection_never_spawns(self):
        alive, finished, nid = byte_step([], [det(0, 50, 50, 0.69)], step_params(), 1)
        assert alive == [] and finished == [] and nid == 1

    def test_unmatched_high_detection_spawns(self):
        alive, _, nid = byte_step([], [det(0, 50, 50, 0.7)], step_params(), 1)
        assert len(alive) == 1 and nid == 2
        assert alive[0].state == STATE_ACTIVE and alive[0].track_id == 1

    def test_below_floor_detection_ignored(self):
        t = track_from([(0, 100, 200), (1, 100, 203)])
        alive, _, _ = byte_step([t], [det(2, 100, 206, 0.49)], step_params(), 2)
        assert len(t.points) == 2 and t.state == STATE_LOST

    def test_lost_track_recovered_by_high_detection(self):
        t = track_from([(0, 100, 200), (1, 100, 203)])
        byte_step([t], [], step_params(track_buffer=2), 2)
        assert t.state == STATE_LOST and t.frames_since_match == 1
        # two frames after its last fix, the storm should sit near col 209
        alive, _, _ = byte_step([t], [det(3, 100, 209, 0.9)], step_params(track_buffer=2), 2)
        assert t.state == STATE_ACTIVE and t.frames_since_match == 0
        assert len(t.points) == 3

    def test_lost_track_not_offered_low_detections(self):
        t = track_from([(0, 100, 200), (1, 100, 203)])
        byte_step([t], [], step_params(track_buffer=3), 2)
        assert t.state == STATE_LOST
        byte_step([t], [det(3, 100, 209, 0.6)], step_params(track_buffer=3), 2)
        assert len(t.points) == 2 and t.frames_since_match == 2

    def test_buffer_exceeded_finishes_track(self):
        t = track_from([(0, 100, 200), (1, 100, 203)])
        alive, finished, _ = byte_step([t], [], step_params(track_buffer=0), 2)
        assert finished == [t] and alive == []
        assert t.state == STATE_FINISHED

    def test_displacement_gate_blocks_overlapping_boxes(self):
        # 15 rows is 417 km, over the limit, yet 35-cell boxes still overlap
        t = track_from([(0, 100, 200)])
        p = step_params(bbox_size=35, motion="none")
        alive, _, nid = byte_step([t], [det(1, 115, 200, 0.9)], p, 2)
        assert len(t.points) == 1 and t.state == STATE_LOST
        assert nid == 3  # the gated detection founded a new track instead
        spawned = [x for x in alive if x.track_id == 2]
        assert len(spawned) == 1

    def test_assignment_prefers_nearer_of_two_tracks(self):
        a = track_from([(0, 100, 200), (1, 100, 203)], track_id=1)
        b = track_from([(0, 140, 200), (1, 140, 203)], track_id=2)
        d = det(2, 100, 206, 0.9)
        alive, _, _ = byte_step([a, b], [d], step_params(), 3)
        assert len(a.points) == 3 and len(b.points) == 2


class TestRunTracker:
    def storm_dets(self, start_step, n, row, col0, dcol=3.0, score=0.9, skip=()):
        return [
            det(start_step + i, row, col0 + i * dcol, score)
            for i in range(n)
            if i not in skip
        ]

    def test_single_storm_single_track(self):
        dets = self.storm_dets(0, 14, 240, 100)
        tracks = run_tracker(dets, step_params())
        assert len(tracks) == 1
        assert len(tracks[0].points) == 14
        assert tracks[0].state == STATE_FINISHED
        times = [p.time for p in tracks[0].points]
        assert times == sorted(times)

    def test_gap_bridged_by_buffer(self):
        dets = self.storm_dets(0, 14, 240, 100, skip=(6,))
        tracks = run_tracker(dets, step_params(track_buffer=1))
        assert len(tracks) == 1
        assert len(tracks[0].points) == 13

    def test_gap_fragments_without_buffer(self):
        dets = self.storm_dets(0, 14, 240, 100, skip=(6,))
        tracks = run_tracker(dets, step_params(track_buffer=0))
        assert len(tracks) == 2
        assert [len(t.points) for t in tracks] == [6, 7]

    def test_output_sorted_by_genesis(self):
        dets = self.storm_dets(3, 13, 240, 100) + self.storm_dets(0, 13, 150, 500)
        tracks = run_tracker(dets, step_params())
        assert [t.points[0].time for t in tracks] == sorted(t.points[0].time for t in tracks)

    def test_two_parallel_storms_stay_separate(self):
        dets = self.storm_dets(0, 14, 240, 100) + self.storm_dets(0, 14, 180, 400)
        tracks = run_tracker(dets, step_params())
        assert len(tracks) == 2
        assert all(len(t.points) == 14 for t in tracks)

    def test_off_lattice_timestamp_rejected(self):
        bad = Detection.from_cell(parse_time("1995-08-01T03:00:00Z"), 100, 100, 0.9)
        with pytest.raises(ValueError, match="6-hourly"):
            run_tracker([bad], step_params())

    def test_empty_stream(self):
        assert run_tracker([], step_params()) == []

    def test_deterministic_for_identical_input(self):
        dets = self.storm_dets(0, 20, 240, 100) + self.storm_dets(2, 15, 200, 400)
        a = run_tracker(dets, step_params())
        b = run_tracker(dets, step_params())
        assert [(t.track_id, len(t.points)) for t in a] == [
            (t.track_id, len(t.points)) for t in b
        ]


class TestPhysicalFilters:
    def test_short_track_dropped_at_boundary(self):
        t11 = track_from([(i, 240, 100 + 3 * i) for i in range(11)])
        t12 = track_from([(i, 240, 100 + 3 * i) for i in range(12)], track_id=2)
        kept = apply_physical_filters([t11, t12], step_params())
        assert [t.track_id for t in kept] == [2]

    def test_genesis_latitude_gate(self):
        # rows: lat 31 -> row 156, lat 30 -> 160, lat 29 -> 164
        high = track_from([(i, 156, 100 + 3 * i) for i in range(12)], track_id=1)
        edge = track_from([(i, 160, 400 + 3 * i) for i in range(12)], track_id=2)
        low = track_from([(i, 164, 700 + 3 * i) for i in range(12)], track_id=3)
        kept = apply_physical_filters([high, edge, low], step_params())
        assert [t.track_id for t in kept] == [2, 3]

    def test_genesis_gate_disabled_with_none(self):
        high = track_from([(i, 156, 100 + 3 * i) for i in range(12)], track_id=1)
        kept = apply_physical_filters([high], step_params(genesis_lat_max=None))
        assert kept == [high]

    def test_poleward_march_allowed_after_genesis(self):
        cells = [(i, 170 - 6 * i, 100 + 3 * i) for i in range(12)]  # ends at lat 43.5
        t = track_from(cells)
        kept = apply_physical_filters([t], step_params())
        assert kept == [t]

    def test_displacement_violation_raises(self):
        t = track_from([(0, 240, 100), (1, 240, 130)] + [(2 + i, 240, 130 + 3 * i) for i in range(10)])
        with pytest.raises(RuntimeError, match="displacement"):
            apply_physical_filters([t], step_params())


class TestTracksFile:
    def test_round_trip(self, tmp_path):
        dets = [det(i, 240, 100 + 3 * i) for i in range(14)]
        tracks = run_tracker(dets, step_params())
        path = write_tracks(tracks, tmp_path / "tracks.csv")
        back = read_tracks(path)
        assert len(back) == len(tracks)
        for a, b in zip(back, tracks):
            assert a.track_id == b.track_id
            assert [p.time for p in a.points] == [p.time for p in b.points]
            for pa, pb in zip(a.points, b.points):
                assert pa.lat == pytest.approx(pb.lat, abs=1e-6)
                assert pa.lon == pytest.approx(pb.lon, abs=1e-6)
                assert pa.score == pytest.approx(pb.score, abs=1e-6)

    def test_sorted_and_byte_stable(self, tmp_path):
        dets = [det(i, 240, 100 + 3 * i) for i in range(14)] + [
            det(i, 180, 500 + 3 * i) for i in range(2, 15)
        ]
        tracks = run_tracker(dets, step_params())
        a = write_tracks(tracks, tmp_path / "a.csv")
        b = write_tracks(tracks, tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()
        lines = a.read_text().splitlines()[1:]
        keys = [(int(l.split(",")[0]), l.split(",")[1]) for l in lines]
        assert keys == sorted(keys)

    def test_header_validated(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            read_tracks(bad)


class TestByteParamsValidation:
    def test_floor_above_threshold_rejected(self):
        with pytest.raises(ValueError):
            ByteParams(track_threshold=0.4, low_score_floor=0.5)

    def test_even_bbox_rejected(self):
        with pytest.raises(ValueError):
            ByteParams(bbox_size=20)

    def test_zero_buffer_allowed(self):
        assert ByteParams(track_buffer=0).track_buffer == 0

    def test_negative_buffer_rejected(self):
        with pytest.raises(ValueError):
            ByteParams(track_buffer=-1)

    def test_unknown_motion_rejected(self):
        with pytest.raises(ValueError):
            ByteParams(motion="kalman")
