"""Track verification against reference tracks, plus climatology statistics.

A detected track counts as a hit for every reference track it shadows:
matching is many-to-many, one coincident point pair within the match
radius is enough by default. The remaining statistics (interannual
variability, durations, bearing smoothness, seasonality, position
scatter) each consume plain track lists so they compose freely.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .besttrack import BestTrackPoint, group_by_storm
from .geo import GeoPoint, haversine_km, track_smoothness_deg
from .tracker import Track


class MetricUndefined(ValueError):
    """A metric's denominator or variance vanished for the given inputs."""


@dataclass(frozen=True)
class RefTrack:
    """A track reduced to what the metrics need: stamped positions plus
    optional max sustained wind and a basin code for observed storms."""

    track_id: str
    times: tuple[datetime, ...]
    points: tuple[GeoPoint, ...]
    msw: tuple[float | None, ...]
    basin: str | None = None

    def __post_init__(self) -> None:
        if not self.times:
            raise ValueError("track must have at least one point")
        if not (len(self.times) == len(self.points) == len(self.msw)):
            raise ValueError("times, points and msw must align")
        for a, b in zip(self.times, self.times[1:]):
            if b <= a:
                raise ValueError(f"track {self.track_id}: timestamps must increase")

    @property
    def genesis_time(self) -> datetime:
        return self.times[0]

    @property
    def genesis(self) -> GeoPoint:
        return self.points[0]


def ref_tracks_from_best(points: list[BestTrackPoint]) -> list[RefTrack]:
    out = []
    for storm_id, rows in group_by_storm(points).items():
        basin = next((r.basin for r in rows if r.basin), None)
        out.append(
            RefTrack(
                track_id=storm_id,
                times=tuple(r.time for r in rows),
                points=tuple(r.point for r in rows),
                msw=tuple(r.msw for r in rows),
                basin=basin,
            )
        )
    out.sort(key=lambda t: (t.genesis_time, t.track_id))
    return out


def ref_tracks_from_tracker(tracks: list[Track]) -> list[RefTrack]:
    return [
        RefTrack(
            track_id=str(t.track_id),
            times=tuple(p.time for p in t.points),
            points=tuple(p.point for p in t.points),
            msw=(None,) * len(t.points),
        )
        for t in tracks
    ]


@dataclass(frozen=True)
class MatchPair:
    obs_id: str
    det_id: str
    matched_steps: int
    mean_distance_km: float


@dataclass(frozen=True)
class MatchReport:
    hits: int
    misses: int
    false_alarms: int
    pairs: tuple[MatchPair, ...]
    radius_km: float
    min_matched_steps: int


def _matching_steps(
    obs: RefTrack, det: RefTrack, radius_km: float
) -> list[tuple[int, int, float]]:
    det_index = {t: j for j, t in enumerate(det.times)}
    out = []
    for i, t in enumerate(obs.times):
        j = det_index.get(t)
        if j is None:
            continue
        d = haversine_km(obs.points[i], det.points[j])
        if d <= radius_km:
            out.append((i, j, d))
    return out


def match_tracks(
    observed: list[RefTrack],
    detected: list[RefTrack],
    radius_km: float = 300.0,
    min_matched_steps: int = 1,
) -> MatchReport:
    if min_matched_steps < 1:
        raise ValueError("min_matched_steps must be at least 1")
    pairs: list[MatchPair] = []
    hit_obs: set[str] = set()
    hit_det: set[str] = set()
    for obs in observed:
        for det in detected:
            steps = _matching_steps(obs, det, radius_km)
            if len(steps) >= min_matched_steps:
                pairs.append(
                    MatchPair(
                        obs_id=obs.track_id,
                        det_id=det.track_id,
                        matched_steps=len(steps),
                        mean_distance_km=float(np.mean([d for _, _, d in steps])),
                    )
                )
                hit_obs.add(obs.track_id)
                hit_det.add(det.track_id)
    return MatchReport(
        hits=len(hit_obs),
        misses=len(observed) - len(hit_obs),
        false_alarms=sum(1 for d in detected if d.track_id not in hit_det),
        pairs=tuple(pairs),
        radius_km=radius_km,
        min_matched_steps=min_matched_steps,
    )


def pod(report: MatchReport) -> float:
    denom = report.hits + report.misses
    if denom == 0:
        raise MetricUndefined("POD undefined: no observed tracks")
    return 100.0 * report.hits / denom


def far(report: MatchReport) -> float:
    denom = report.hits + report.false_alarms
    if denom == 0:
        raise MetricUndefined("FAR undefined: no hits and no false alarms")
    return 100.0 * report.false_alarms / denom


def iav_series(tracks: list[RefTrack], years: list[int], month: int = 8) -> list[int]:
    """Per-year count of tracks whose genesis falls in the target month."""
    if not 1 <= month <= 12:
        raise ValueError(f"month must be 1..12, got {month}")
    counts = {y: 0 for y in years}
    for t in tracks:
        g = t.genesis_time
        if g.month == month and g.year in counts:
            counts[g.year] += 1
    return [counts[y] for y in years]


def detrended_pearson(a: list[float], b: list[float]) -> float:
    if len(a) != len(b):
        raise ValueError("series must have equal length")
    if len(a) < 3:
        raise MetricUndefined("detrended correlation needs at least 3 points")
    xa = np.asarray(a, dtype=np.float64)
    xb = np.asarray(b, dtype=np.float64)
    ra, rb = _detrend(xa), _detrend(xb)
    va, vb = float(ra @ ra), float(rb @ rb)
    # fitting noise leaves ~1e-15-scale residue even on an exact line,
    # so "zero variance" has to be judged relative to the series scale
    for resid_var, series in ((va, xa), (vb, xb)):
        floor = 1e-10 * np.sqrt(len(series)) * max(1.0, float(np.max(np.abs(series))))
        if np.sqrt(resid_var) <= floor:
            raise MetricUndefined("zero residual variance after detrending")
    return float((ra @ rb) / np.sqrt(va * vb))


def _detrend(y: np.ndarray) -> np.ndarray:
    t = np.arange(len(y), dtype=np.float64)
    design = np.stack([t, np.ones_like(t)], axis=1)
    coeff, *_ = np.linalg.lstsq(design, y, rcond=None)
    return y - design @ coeff


def duration_histogram(tracks: list[RefTrack]) -> dict[int, int]:
    """Whole-day duration bins; a 6-hourly track of n points spans (n-1)/4 days."""
    hist: dict[int, int] = {}
    for t in tracks:
        days = (len(t.times) - 1) // 4
        hist[days] = hist.get(days, 0) + 1
    return dict(sorted(hist.items()))


@dataclass(frozen=True)
class SmoothnessStats:
    sigmas: tuple[float, ...]
    n_excluded: int
    q1: float | None
    median: float | None
    q3: float | None


def smoothness_stats(tracks: list[RefTrack]) -> SmoothnessStats:
    sigmas: list[float] = []
    excluded = 0
    for t in tracks:
        try:
            sigmas.append(track_smoothness_deg(list(t.points)))
        except ValueError:
            excluded += 1
    if sigmas:
        q1, med, q3 = (float(q) for q in np.percentile(sigmas, [25.0, 50.0, 75.0]))
    else:
        q1 = med = q3 = None
    return SmoothnessStats(
        sigmas=tuple(sigmas), n_excluded=excluded, q1=q1, median=med, q3=q3
    )


def seasonal_distribution(tracks: list[RefTrack]) -> dict[int, int]:
    counts = {m: 0 for m in range(1, 13)}
    for t in tracks:
        counts[t.genesis_time.month] += 1
    return counts


def latlon_scatter(
    report: MatchReport, observed: list[RefTrack], detected: list[RefTrack]
) -> list[tuple[GeoPoint, GeoPoint, float | None]]:
    """One (true, predicted, msw) triplet per matched point pair."""
    obs_by_id = {t.track_id: t for t in observed}
    det_by_id = {t.track_id: t for t in detected}
    out: list[tuple[GeoPoint, GeoPoint, float | None]] = []
    for pair in report.pairs:
        obs, det = obs_by_id[pair.obs_id], det_by_id[pair.det_id]
        for i, j, _ in _matching_steps(obs, det, report.radius_km):
            out.append((obs.points[i], det.points[j], obs.msw[i]))
    return out


BASIN_WNP = "wnp"
BASIN_ENP = "enp"

# IBTrACS basin codes that override the longitude rule
_BASIN_CODES = {"WP": BASIN_WNP, "EP": BASIN_ENP, "CP": BASIN_ENP}


def assign_basin(track: RefTrack) -> str:
    if track.basin is not None and track.basin in _BASIN_CODES:
        return _BASIN_CODES[track.basin]
    lon = track.genesis.lon
    if 100.0 <= lon < 180.0:
        return BASIN_WNP
    if 180.0 <= lon < 320.0:
        return BASIN_ENP
    raise ValueError(f"genesis longitude {lon} outside the supported domain")


def split_by_basin(tracks: list[RefTrack]) -> dict[str, list[RefTrack]]:
    out: dict[str, list[RefTrack]] = {BASIN_WNP: [], BASIN_ENP: []}
    for t in tracks:
        out[assign_basin(t)].append(t)
    return out


@dataclass(frozen=True)
class MetricsReport:
    pod: float
    far: float
    years: tuple[int, ...]
    month: int
    iav_observed: tuple[int, ...]
    iav_detected: tuple[int, ...]
    iav_pearson_detrended: float | None
    duration_observed: dict[int, int]
    duration_detected: dict[int, int]
    smoothness_observed: SmoothnessStats
    smoothness_detected: SmoothnessStats
    seasonal_observed: dict[int, int]
    seasonal_detected: dict[int, int]
    latlon: tuple[tuple[GeoPoint, GeoPoint, float | None], ...]
    match: MatchReport


def compute_metrics(
    observed: list[RefTrack],
    detected: list[RefTrack],
    years: list[int] | None = None,
    month: int = 8,
    radius_km: float = 300.0,
    min_matched_steps: int = 1,
) -> MetricsReport:
    """Full metric suite over one observed/detected track pairing.

    POD and FAR raise MetricUndefined when their denominators vanish;
    a degenerate interannual correlation is reported as None instead
    since one flat season should not abort a whole report.
    """
    report = match_tracks(observed, detected, radius_km, min_matched_steps)
    if years is None:
        stamps = [t.genesis_time.year for t in observed + detected]
        years = list(range(min(stamps), max(stamps) + 1)) if stamps else []
    iav_obs = iav_series(observed, years, month)
    iav_det = iav_series(detected, years, month)
    try:
        r = detrended_pearson([float(v) for v in iav_obs], [float(v) for v in iav_det])
    except MetricUndefined:
        r = None
    return MetricsReport(
        pod=pod(report),
        far=far(report),
        years=tuple(years),
        month=month,
        iav_observed=tuple(iav_obs),
        iav_detected=tuple(iav_det),
        iav_pearson_detrended=r,
        duration_observed=duration_histogram(observed),
        duration_detected=duration_histogram(detected),
        smoothness_observed=smoothness_stats(observed),
        smoothness_detected=smoothness_stats(detected),
        seasonal_observed=seasonal_distribution(observed),
        seasonal_detected=seasonal_distribution(detected),
        latlon=tuple(latlon_scatter(report, observed, detected)),
        match=report,
    )
