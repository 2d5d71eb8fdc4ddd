"""Best-track observation records and their CSV exchange format."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from .geo import GeoPoint
from .timeutil import format_time, parse_time

HEADER = ["storm_id", "iso_time", "lat", "lon", "msw", "nature", "track_type", "basin"]
NATURES = frozenset({"NR", "MX", "DS", "TS", "ET", "SS"})
TRACK_TYPES = frozenset({"main", "provisional", "spur", "provisional-spur"})


@dataclass(frozen=True)
class BestTrackPoint:
    storm_id: str
    time: datetime
    lat: float
    lon: float
    msw: float | None
    nature: str
    track_type: str
    basin: str | None = None

    def __post_init__(self) -> None:
        if self.nature not in NATURES:
            raise ValueError(f"unknown nature {self.nature!r}")
        if self.track_type not in TRACK_TYPES:
            raise ValueError(f"unknown track_type {self.track_type!r}")

    @property
    def point(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lon)


def read_best_tracks(path: str | Path) -> list[BestTrackPoint]:
    points: list[BestTrackPoint] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != HEADER:
            raise ValueError(f"unexpected best-track header: {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(HEADER):
                raise ValueError(f"line {lineno}: expected {len(HEADER)} fields, got {len(row)}")
            sid, iso, lat, lon, msw, nature, ttype, basin = row
            points.append(
                BestTrackPoint(
                    storm_id=sid,
                    time=parse_time(iso),
                    lat=float(lat),
                    lon=float(lon),
                    msw=float(msw) if msw.strip() else None,
                    nature=nature.strip(),
                    track_type=ttype.strip(),
                    basin=basin.strip() or None,
                )
            )
    return points


def write_best_tracks(points: list[BestTrackPoint], path: str | Path) -> Path:
    out = Path(path)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for p in points:
            writer.writerow(
                [
                    p.storm_id,
                    format_time(p.time),
                    repr(p.lat),
                    repr(p.lon),
                    "" if p.msw is None else repr(p.msw),
                    p.nature,
                    p.track_type,
                    p.basin or "",
                ]
            )
    return out


def main_only(points: list[BestTrackPoint]) -> list[BestTrackPoint]:
    """Keep only consolidated main tracks; spurs and provisional rows drop."""
    return [p for p in points if p.track_type == "main"]


def group_by_storm(points: list[BestTrackPoint]) -> dict[str, list[BestTrackPoint]]:
    """Points per storm id, each list sorted by time."""
    storms: dict[str, list[BestTrackPoint]] = {}
    for p in points:
        storms.setdefault(p.storm_id, []).append(p)
    for sid in storms:
        storms[sid].sort(key=lambda p: p.time)
    return storms
