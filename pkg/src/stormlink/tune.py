"""Tracker hyperparameter search over box size, buffer and track constraints.

Every candidate shares one cached detection set, since detection does
not depend on association parameters. Candidates are scored on four
objectives (POD, FAR, per-basin interannual correlations), reduced to
the Pareto frontier, and a weighted min-max-normalized sum picks the
final tracker.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .metrics import (
    MetricUndefined,
    RefTrack,
    detrended_pearson,
    far,
    iav_series,
    match_tracks,
    pod,
    ref_tracks_from_tracker,
    split_by_basin,
)
from .tracker import ByteParams, Detection, Track, apply_physical_filters, run_tracker

BBOX_GRID = (15, 21, 25, 31, 35)
BUFFER_GRID = (1, 2, 3, 4)

CONSTRAINT_SETS = ("none", "no_land", "lat30", "lat50", "no_land_lat30", "no_land_lat50")
_LAT_LIMIT = {
    "none": None,
    "no_land": None,
    "lat30": 30.0,
    "lat50": 50.0,
    "no_land_lat30": 30.0,
    "no_land_lat50": 50.0,
}
_NEEDS_LAND = frozenset({"no_land", "no_land_lat30", "no_land_lat50"})


@dataclass(frozen=True)
class CandidateMetrics:
    pod: float
    far: float
    r_enp: float
    r_wnp: float
    # basins whose correlation was undefined and fell back to 0.0
    degenerate: tuple[str, ...] = ()


@dataclass(frozen=True)
class TunerCandidate:
    bbox_size: int
    track_buffer: int
    match_threshold: float = 0.8
    track_threshold: float = 0.7
    constraint_set: str = "none"
    metrics: CandidateMetrics | None = None

    def __post_init__(self) -> None:
        if self.bbox_size not in BBOX_GRID:
            raise ValueError(f"bbox_size must be one of {BBOX_GRID}, got {self.bbox_size}")
        if self.track_buffer not in BUFFER_GRID:
            raise ValueError(f"track_buffer must be one of {BUFFER_GRID}, got {self.track_buffer}")
        if self.constraint_set not in CONSTRAINT_SETS:
            raise ValueError(f"unknown constraint set {self.constraint_set!r}")


@dataclass(frozen=True)
class Weights:
    w_pod: float = 0.4
    w_far: float = 0.3
    w_enp: float = 0.15
    w_wnp: float = 0.15

    def __post_init__(self) -> None:
        vals = (self.w_pod, self.w_far, self.w_enp, self.w_wnp)
        if any(w < 0 for w in vals):
            raise ValueError("weights must be non-negative")
        if abs(sum(vals) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {sum(vals)}")


def enumerate_candidates(
    bbox_sizes=BBOX_GRID,
    buffers=BUFFER_GRID,
    constraint_sets=CONSTRAINT_SETS,
    match_threshold: float = 0.8,
    track_threshold: float = 0.7,
) -> list[TunerCandidate]:
    """Cartesian product of the three sets, de-duplicated, in a fixed order."""
    sets = []
    seen: set[str] = set()
    for s in constraint_sets:
        if s not in seen:
            seen.add(s)
            sets.append(s)
    out = []
    for bbox in sorted(set(bbox_sizes)):
        for buffer in sorted(set(buffers)):
            for constraint in sets:
                out.append(
                    TunerCandidate(
                        bbox_size=bbox,
                        track_buffer=buffer,
                        match_threshold=match_threshold,
                        track_threshold=track_threshold,
                        constraint_set=constraint,
                    )
                )
    return out


def _oriented(m: CandidateMetrics) -> tuple[float, float, float, float]:
    # all four point "up" after negating FAR
    return (m.pod, -m.far, m.r_enp, m.r_wnp)


def _dominates(a: CandidateMetrics, b: CandidateMetrics) -> bool:
    va, vb = _oriented(a), _oriented(b)
    return all(x >= y for x, y in zip(va, vb)) and any(x > y for x, y in zip(va, vb))


def pareto_frontier(candidates: list[TunerCandidate]) -> list[int]:
    """Indices of non-dominated candidates, preserving input order."""
    for c in candidates:
        if c.metrics is None:
            raise ValueError("pareto_frontier needs evaluated candidates")
    out = []
    for i, c in enumerate(candidates):
        if not any(
            _dominates(other.metrics, c.metrics)
            for j, other in enumerate(candidates)
            if j != i
        ):
            out.append(i)
    return out


def weighted_select(frontier: list[TunerCandidate], weights: Weights = Weights()) -> TunerCandidate:
    """Argmax of the weighted min-max-normalized objective sum.

    An objective with zero range across the frontier carries no
    information and contributes nothing. Ties fall to the smaller FAR,
    then the smaller box, then the remaining fields for determinism.
    """
    if not frontier:
        raise ValueError("weighted_select needs a non-empty frontier")
    for c in frontier:
        if c.metrics is None:
            raise ValueError("weighted_select needs evaluated candidates")
    table = np.array([_oriented(c.metrics) for c in frontier], dtype=np.float64)
    lo, hi = table.min(axis=0), table.max(axis=0)
    span = hi - lo
    w = np.array([weights.w_pod, weights.w_far, weights.w_enp, weights.w_wnp])
    scores = np.zeros(len(frontier))
    for k in range(4):
        if span[k] > 0:
            scores += w[k] * (table[:, k] - lo[k]) / span[k]
    best = float(scores.max())
    tied = [c for c, s in zip(frontier, scores) if best - s <= 1e-12]
    tied.sort(
        key=lambda c: (
            c.metrics.far,
            c.bbox_size,
            c.track_buffer,
            CONSTRAINT_SETS.index(c.constraint_set),
        )
    )
    return tied[0]


def _byte_params(c: TunerCandidate) -> ByteParams:
    return ByteParams(
        track_threshold=c.track_threshold,
        match_threshold=c.match_threshold,
        track_buffer=c.track_buffer,
        bbox_size=c.bbox_size,
        genesis_lat_max=_LAT_LIMIT[c.constraint_set],
    )


def genesis_on_land(track: Track, land_mask: np.ndarray) -> bool:
    first = track.points[0]
    r = min(max(int(np.floor(first.row + 0.5)), 0), land_mask.shape[0] - 1)
    c = min(max(int(np.floor(first.col + 0.5)), 0), land_mask.shape[1] - 1)
    return bool(land_mask[r, c])


def _basin_correlation(
    observed: list[RefTrack], detected: list[RefTrack], years: list[int], month: int
) -> tuple[float, bool]:
    try:
        obs = [float(v) for v in iav_series(observed, years, month)]
        det = [float(v) for v in iav_series(detected, years, month)]
        return detrended_pearson(obs, det), False
    except MetricUndefined:
        return 0.0, True


def evaluate_candidate(
    candidate: TunerCandidate,
    detections: list[Detection],
    observed: list[RefTrack],
    years: list[int],
    month: int = 8,
    land_mask: np.ndarray | None = None,
    raw_tracks: list[Track] | None = None,
) -> TunerCandidate:
    """Track with the candidate's parameters and attach its metric tuple.

    POD and FAR are computed jointly over both basins, the interannual
    correlations per basin. A degenerate correlation falls back to 0.0
    and is flagged, so one flat basin cannot abort a 120-candidate run.
    """
    if candidate.constraint_set in _NEEDS_LAND and land_mask is None:
        raise ValueError(f"constraint set {candidate.constraint_set!r} needs a land mask")
    params = _byte_params(candidate)
    if raw_tracks is None:
        raw_tracks = run_tracker(detections, params)
    tracks = apply_physical_filters(raw_tracks, params)
    if candidate.constraint_set in _NEEDS_LAND:
        tracks = [t for t in tracks if not genesis_on_land(t, land_mask)]
    detected = ref_tracks_from_tracker(tracks)
    report = match_tracks(observed, detected)
    obs_basins = split_by_basin(observed)
    det_basins = split_by_basin(detected)
    r_enp, d_enp = _basin_correlation(obs_basins["enp"], det_basins["enp"], years, month)
    r_wnp, d_wnp = _basin_correlation(obs_basins["wnp"], det_basins["wnp"], years, month)
    degenerate = tuple(
        name for name, flag in (("enp", d_enp), ("wnp", d_wnp)) if flag
    )
    metrics = CandidateMetrics(
        pod=pod(report), far=far(report), r_enp=r_enp, r_wnp=r_wnp, degenerate=degenerate
    )
    return replace(candidate, metrics=metrics)


@dataclass(frozen=True)
class TunerResult:
    candidates: tuple[TunerCandidate, ...]
    frontier: tuple[int, ...]
    selected: TunerCandidate
    weights: Weights
    skipped_sets: tuple[str, ...]


def run_tuner(
    detections: list[Detection],
    observed: list[RefTrack],
    years: list[int],
    month: int = 8,
    land_mask: np.ndarray | None = None,
    weights: Weights = Weights(),
    candidates: list[TunerCandidate] | None = None,
    jobs: int = 1,
) -> TunerResult:
    if candidates is None:
        candidates = enumerate_candidates()
    skipped: list[str] = []
    if land_mask is None:
        skipped = sorted(
            {c.constraint_set for c in candidates if c.constraint_set in _NEEDS_LAND}
        )
        if skipped:
            warnings.warn(
                f"no land mask given; skipping constraint sets {', '.join(skipped)}",
                stacklevel=2,
            )
        candidates = [c for c in candidates if c.constraint_set not in _NEEDS_LAND]
    if not candidates:
        raise ValueError("no candidates left to evaluate")

    # association depends only on these four fields, so tracker runs are
    # shared across the constraint variants
    keys = []
    for c in candidates:
        key = (c.bbox_size, c.track_buffer, c.match_threshold, c.track_threshold)
        if key not in keys:
            keys.append(key)

    def _track(key) -> list[Track]:
        bbox, buffer, match_t, track_t = key
        params = ByteParams(
            track_threshold=track_t,
            match_threshold=match_t,
            track_buffer=buffer,
            bbox_size=bbox,
        )
        return run_tracker(detections, params)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            raw_by_key = dict(zip(keys, pool.map(_track, keys)))
    else:
        raw_by_key = {key: _track(key) for key in keys}

    evaluated = [
        evaluate_candidate(
            c,
            detections,
            observed,
            years,
            month,
            land_mask,
            raw_tracks=raw_by_key[
                (c.bbox_size, c.track_buffer, c.match_threshold, c.track_threshold)
            ],
        )
        for c in candidates
    ]
    frontier = pareto_frontier(evaluated)
    selected = weighted_select([evaluated[i] for i in frontier], weights)
    return TunerResult(
        candidates=tuple(evaluated),
        frontier=tuple(frontier),
        selected=selected,
        weights=weights,
        skipped_sets=tuple(skipped),
    )


def sweep_thresholds(
    detections: list[Detection],
    observed: list[RefTrack],
    years: list[int],
    match_values: list[float],
    track_values: list[float],
    month: int = 8,
    bbox_size: int = 25,
    track_buffer: int = 1,
) -> list[TunerCandidate]:
    """First-phase 2-D grid over (match, track) thresholds at a fixed tracker."""
    out = []
    for match_t in sorted(set(match_values)):
        for track_t in sorted(set(track_values)):
            out.append(
                evaluate_candidate(
                    TunerCandidate(
                        bbox_size=bbox_size,
                        track_buffer=track_buffer,
                        match_threshold=match_t,
                        track_threshold=track_t,
                    ),
                    detections,
                    observed,
                    years,
                    month,
                )
            )
    return out
