"""Two-stage score-split data association with physical gating.

Each frame, high-score detections are offered to every live track first;
leftover active tracks then get a shot at the low-score band. Unmatched
high detections found new tracks, low ones never do. Tracks survive
track_buffer missed frames as "lost" before finishing, and a candidate
pair is inadmissible when the implied 6-hour displacement exceeds the
physical limit, whatever its box overlap says.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geo import GeoPoint, GridSpec, geo_to_grid, grid_to_geo, haversine_km
from .timeutil import format_time, is_synoptic, parse_time

STEP = timedelta(hours=6)

STATE_ACTIVE = "active"
STATE_LOST = "lost"
STATE_FINISHED = "finished"

MOTION_NONE = "none"
MOTION_CONSTANT_VELOCITY = "constant_velocity"

# any value above this is treated as a forbidden assignment
_BIG_COST = 1e9


@dataclass(frozen=True)
class Detection:
    time: datetime
    row: float
    col: float
    lat: float
    lon: float
    score: float

    @classmethod
    def from_cell(
        cls, time: datetime, row: float, col: float, score: float, spec: GridSpec = GridSpec()
    ) -> "Detection":
        p = grid_to_geo(row, col, spec)
        return cls(time=time, row=row, col=col, lat=p.lat, lon=p.lon, score=score)

    @property
    def point(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lon)


@dataclass(frozen=True)
class ByteParams:
    track_threshold: float = 0.7
    match_threshold: float = 0.8
    track_buffer: int = 1
    low_score_floor: float = 0.5
    bbox_size: int = 21
    max_displacement_km: float = 400.0
    min_track_steps: int = 12
    genesis_lat_max: float | None = 30.0
    motion: str = MOTION_CONSTANT_VELOCITY

    def __post_init__(self) -> None:
        for name in ("track_threshold", "match_threshold", "low_score_floor"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.low_score_floor > self.track_threshold:
            raise ValueError("low_score_floor must not exceed track_threshold")
        if self.track_buffer < 0:
            raise ValueError("track_buffer must be non-negative")
        if self.bbox_size < 1 or self.bbox_size % 2 == 0:
            raise ValueError("bbox_size must be odd and positive")
        if self.max_displacement_km <= 0:
            raise ValueError("max_displacement_km must be positive")
        if self.min_track_steps < 1:
            raise ValueError("min_track_steps must be at least 1")
        if self.motion not in (MOTION_NONE, MOTION_CONSTANT_VELOCITY):
            raise ValueError(f"unknown motion model {self.motion!r}")


@dataclass
class Track:
    track_id: int
    points: list[Detection] = field(default_factory=list)
    state: str = STATE_ACTIVE
    frames_since_match: int = 0

    @property
    def genesis_time(self) -> datetime:
        return self.points[0].time

    @property
    def last(self) -> Detection:
        return self.points[-1]


@dataclass(frozen=True)
class AssignmentResult:
    matches: list[tuple[int, int]]
    unmatched_rows: list[int]
    unmatched_cols: list[int]


def center_box(row: float, col: float, side: float) -> tuple[float, float, float, float]:
    h = side / 2.0
    return row - h, col - h, row + h, col + h


def iou(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> float:
    inter_h = min(a[2], b[2]) - max(a[0], b[0])
    inter_w = min(a[3], b[3]) - max(a[1], b[1])
    if inter_h <= 0.0 or inter_w <= 0.0:
        return 0.0
    inter = inter_h * inter_w
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def solve_assignment(cost: np.ndarray, max_cost: float) -> AssignmentResult:
    """Min-cost bipartite matching; pairs costing more than max_cost stay unmatched.

    Maximizes the number of admissible matches, then minimizes their total
    cost. Forbidden entries are lifted to a large sentinel for the solver
    and stripped from its output afterwards.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError(f"cost must be 2-D, got shape {cost.shape}")
    n, m = cost.shape
    if n == 0 or m == 0:
        return AssignmentResult([], list(range(n)), list(range(m)))
    capped = np.where(cost > max_cost, _BIG_COST, cost)
    rows, cols = linear_sum_assignment(capped)
    matches = [(int(r), int(c)) for r, c in zip(rows, cols) if cost[r, c] <= max_cost]
    matched_rows = {r for r, _ in matches}
    matched_cols = {c for _, c in matches}
    return AssignmentResult(
        matches=matches,
        unmatched_rows=[r for r in range(n) if r not in matched_rows],
        unmatched_cols=[c for c in range(m) if c not in matched_cols],
    )


def predict_box(
    track: Track, bbox_size: int, motion: str = MOTION_CONSTANT_VELOCITY
) -> tuple[float, float, float, float]:
    """Expected box at the current frame, extrapolated from the last two fixes.

    A track unmatched for k frames extrapolates k+1 steps beyond its last
    point. With one recorded point, or motion "none", the box stays put.
    """
    last = track.last
    if motion == MOTION_NONE or len(track.points) < 2:
        return center_box(last.row, last.col, bbox_size)
    prev = track.points[-2]
    # the two fixes may straddle missed frames; use per-frame velocity
    gap = max(1, int((last.time - prev.time) / STEP))
    steps = track.frames_since_match + 1
    row = last.row + steps * (last.row - prev.row) / gap
    col = last.col + steps * (last.col - prev.col) / gap
    return center_box(row, col, bbox_size)


def _association_cost(
    tracks: list[Track], dets: list[Detection], p: ByteParams
) -> np.ndarray:
    cost = np.full((len(tracks), len(dets)), _BIG_COST)
    for i, t in enumerate(tracks):
        box_t = predict_box(t, p.bbox_size, p.motion)
        for j, d in enumerate(dets):
            if haversine_km(t.last.point, d.point) > p.max_displacement_km:
                continue
            cost[i, j] = 1.0 - iou(box_t, center_box(d.row, d.col, p.bbox_size))
    return cost


def byte_step(
    tracks: list[Track],
    detections: list[Detection],
    p: ByteParams,
    next_track_id: int,
) -> tuple[list[Track], list[Track], int]:
    """Advance all live tracks by one frame of detections.

    Returns (alive tracks, tracks finished at this frame, next track id).
    """
    high = [d for d in detections if d.score >= p.track_threshold]
    low = [d for d in detections if p.low_score_floor <= d.score < p.track_threshold]

    pool1 = list(tracks)
    first = solve_assignment(_association_cost(pool1, high, p), p.match_threshold)
    matched_tracks: set[int] = set()
    for ti, dj in first.matches:
        t = pool1[ti]
        t.points.append(high[dj])
        t.state = STATE_ACTIVE
        t.frames_since_match = 0
        matched_tracks.add(id(t))

    pool2 = [t for t in tracks if id(t) not in matched_tracks and t.state == STATE_ACTIVE]
    second = solve_assignment(
        _association_cost(pool2, low, p), min(p.match_threshold, 0.5)
    )
    for ti, dj in second.matches:
        t = pool2[ti]
        t.points.append(low[dj])
        t.frames_since_match = 0
        matched_tracks.add(id(t))

    alive: list[Track] = []
    finished: list[Track] = []
    for t in tracks:
        if id(t) in matched_tracks:
            alive.append(t)
        else:
            t.frames_since_match += 1
            if t.frames_since_match > p.track_buffer:
                t.state = STATE_FINISHED
                finished.append(t)
            else:
                t.state = STATE_LOST
                alive.append(t)

    for dj in first.unmatched_cols:
        alive.append(Track(track_id=next_track_id, points=[high[dj]]))
        next_track_id += 1
    return alive, finished, next_track_id


def run_tracker(
    detections: list[Detection], p: ByteParams = ByteParams()
) -> list[Track]:
    """Associate a detection stream into finished tracks.

    Frames advance on the 6-hourly lattice between the first and last
    detection timestamps; missing timestamps count as empty frames.
    """
    if not detections:
        return []
    frames: dict[datetime, list[Detection]] = {}
    for d in detections:
        if not is_synoptic(d.time):
            raise ValueError(f"detection timestamp off the 6-hourly lattice: {d.time}")
        frames.setdefault(d.time, []).append(d)
    times = sorted(frames)
    for t in times:
        frames[t].sort(key=lambda d: (d.row, d.col))
    start, end = times[0], times[-1]
    offset = end - start
    if offset % STEP != timedelta(0):
        raise ValueError("detection timestamps are not 6-hourly")

    alive: list[Track] = []
    done: list[Track] = []
    next_id = 1
    t = start
    while t <= end:
        alive, finished, next_id = byte_step(alive, frames.get(t, []), p, next_id)
        done.extend(finished)
        t += STEP
    for track in alive:
        track.state = STATE_FINISHED
    done.extend(alive)
    done.sort(key=lambda tr: (tr.genesis_time, tr.track_id))
    return done


def apply_physical_filters(tracks: list[Track], p: ByteParams = ByteParams()) -> list[Track]:
    """Drop short tracks and out-of-band genesis; verify the displacement gate.

    A consecutive displacement beyond max_displacement_km means the stream
    bypassed byte_step's gate, which is a caller bug, so it raises rather
    than silently re-filtering.
    """
    kept: list[Track] = []
    for t in tracks:
        if len(t.points) < p.min_track_steps:
            continue
        if p.genesis_lat_max is not None and t.points[0].lat > p.genesis_lat_max:
            continue
        for a, b in zip(t.points, t.points[1:]):
            d = haversine_km(a.point, b.point)
            if d > p.max_displacement_km * (1.0 + 1e-9):
                raise RuntimeError(
                    f"track {t.track_id}: consecutive displacement {d:.1f} km exceeds "
                    f"{p.max_displacement_km} km; association gate was bypassed"
                )
        kept.append(t)
    return kept


TRACKS_HEADER = ["track_id", "iso_time", "lat", "lon", "score"]


def write_tracks(tracks: list[Track], path: str | Path) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for t in tracks:
        for pnt in t.points:
            rows.append((t.track_id, pnt.time, pnt.lat, pnt.lon, pnt.score))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACKS_HEADER)
        for tid, time, lat, lon, score in rows:
            writer.writerow([tid, format_time(time), f"{lat:.6f}", f"{lon:.6f}", f"{score:.6f}"])
    return out


def read_tracks(path: str | Path, spec: GridSpec = GridSpec()) -> list[Track]:
    by_id: dict[int, Track] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRACKS_HEADER:
            raise ValueError(f"unexpected tracks header: {header}")
        for line in reader:
            if not line:
                continue
            tid, iso, lat, lon, score = line
            point = GeoPoint(float(lat), float(lon))
            row, col = geo_to_grid(point, spec)
            det = Detection(
                time=parse_time(iso),
                row=row,
                col=col,
                lat=float(lat),
                lon=float(lon),
                score=float(score),
            )
            track = by_id.setdefault(int(tid), Track(track_id=int(tid), state=STATE_FINISHED))
            track.points.append(det)
    tracks = list(by_id.values())
    for t in tracks:
        t.points.sort(key=lambda d: d.time)
    tracks.sort(key=lambda t: (t.genesis_time, t.track_id))
    return tracks
