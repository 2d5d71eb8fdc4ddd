"""Spherical geometry and grid/geographic coordinate conversions.

All distances are great-circle kilometres on a sphere of radius
``R_EARTH_KM``; bearings are degrees clockwise from true north.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

R_EARTH_KM: float = 6371.0


def _wrap360(x: float) -> float:
    # x % 360.0 rounds to exactly 360.0 for tiny negative x
    w = x % 360.0
    return w if w < 360.0 else 0.0


@dataclass(frozen=True)
class GeoPoint:
    """A latitude/longitude pair; longitude is stored in [0, 360)."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        object.__setattr__(self, "lon", _wrap360(self.lon))


@dataclass(frozen=True)
class GridSpec:
    """Regular lat/lon grid, row 0 at the northern edge, col 0 at the western edge.

    Cell (row, col) is centred at (lat0 - row*cell_deg, lon0 + col*cell_deg).
    """

    lat0: float = 70.0
    lon0: float = 100.0
    cell_deg: float = 0.25
    rows: int = 280
    cols: int = 880

    def __post_init__(self) -> None:
        if self.cell_deg <= 0 or self.rows <= 0 or self.cols <= 0:
            raise ValueError("grid spec dimensions must be positive")


def grid_to_geo(row: float, col: float, spec: GridSpec = GridSpec()) -> GeoPoint:
    """Cell-centre coordinates of a (possibly fractional) grid position."""
    return GeoPoint(spec.lat0 - row * spec.cell_deg, spec.lon0 + col * spec.cell_deg)


def geo_to_grid(point: GeoPoint, spec: GridSpec = GridSpec()) -> tuple[float, float]:
    """Inverse of grid_to_geo; exact on cell centres, fractional elsewhere."""
    row = (spec.lat0 - point.lat) / spec.cell_deg
    col = (point.lon - spec.lon0) % 360.0 / spec.cell_deg
    return row, col


def snap_to_grid(point: GeoPoint, spec: GridSpec = GridSpec()) -> tuple[int, int]:
    """Nearest cell for a point, rounding half up on both axes.

    The returned indices may fall outside the grid; callers that require
    in-domain cells must check against spec.rows/spec.cols.
    """
    row, col = geo_to_grid(point, spec)
    return math.floor(row + 0.5), math.floor(col + 0.5)


def in_grid(row: int, col: int, spec: GridSpec = GridSpec()) -> bool:
    return 0 <= row < spec.rows and 0 <= col < spec.cols


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points in kilometres."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * R_EARTH_KM * math.asin(min(1.0, math.sqrt(h)))


def initial_bearing_deg(a: GeoPoint, b: GeoPoint) -> float:
    """Initial great-circle bearing from a to b, degrees in [0, 360).

    Raises ValueError for coincident points, where the bearing is undefined.
    """
    if a.lat == b.lat and a.lon == b.lon:
        raise ValueError("bearing undefined for coincident points")
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dlam = math.radians(b.lon - a.lon)
    x = math.sin(dlam) * math.cos(phi2)
    y = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlam)
    return _wrap360(math.degrees(math.atan2(x, y)))


def bearing_variation_deg(theta1: float, theta2: float) -> float:
    """Smallest angle between two bearings, degrees in [0, 180]."""
    d = abs(theta2 - theta1) % 360.0
    return min(d, 360.0 - d)


def track_smoothness_deg(points: Sequence[GeoPoint]) -> float:
    """Standard deviation of successive bearing variations along a track.

    Consecutive duplicate points contribute no bearing and are dropped
    first; at least 4 distinct consecutive points must remain. With N
    points there are N-1 bearings and N-2 variations; the result is the
    population standard deviation (divisor N-2) of those variations, in
    degrees. Low values mean a straight, steadily turning track.
    """
    deduped: list[GeoPoint] = []
    for p in points:
        if not deduped or p != deduped[-1]:
            deduped.append(p)
    n = len(deduped)
    if n < 4:
        raise ValueError(f"smoothness needs at least 4 distinct consecutive points, got {n}")
    bearings = [initial_bearing_deg(deduped[i], deduped[i + 1]) for i in range(n - 1)]
    variations = [bearing_variation_deg(bearings[i], bearings[i + 1]) for i in range(n - 2)]
    mean = sum(variations) / len(variations)
    var = sum((v - mean) ** 2 for v in variations) / len(variations)
    return math.sqrt(var)


def destination_point(start: GeoPoint, bearing_deg: float, distance_km: float) -> GeoPoint:
    """Point reached from start along an initial bearing for a great-circle distance."""
    delta = distance_km / R_EARTH_KM
    theta = math.radians(bearing_deg)
    phi1 = math.radians(start.lat)
    lam1 = math.radians(start.lon)
    phi2 = math.asin(
        math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta)
    )
    lam2 = lam1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * math.sin(phi2),
    )
    return GeoPoint(math.degrees(phi2), math.degrees(lam2) % 360.0)
