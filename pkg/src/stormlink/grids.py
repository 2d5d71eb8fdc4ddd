"""Gridded field series and the on-disk portable grid directory format.

A grid directory holds a plain-text manifest plus one raw binary per
timestep. Binaries are float32 little-endian, var-major then row-major
from the north-west corner; the manifest pins dimensions, grid spec,
variable order and the ISO-8601 timestamp of every file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from .geo import GridSpec
from .timeutil import compact_time, format_time, is_synoptic, parse_time

MANIFEST_NAME = "manifest.txt"
FORMAT_TAG = "portable-grid-v1"
LAYOUT = "time-major, var-major, row-major from NW corner"
STORM_VARS = ("rv850", "mslp")


@dataclass
class GridSeries:
    """A time series of multi-variable grids on one GridSpec.

    values has shape (timesteps, variables, rows, cols), dtype float32.
    """

    spec: GridSpec
    variables: tuple[str, ...]
    timestamps: list[datetime] = field(default_factory=list)
    values: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0, 0), np.float32))

    def __post_init__(self) -> None:
        self.variables = tuple(self.variables)
        expected = (len(self.timestamps), len(self.variables), self.spec.rows, self.spec.cols)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != {expected}")
        if self.values.dtype != np.float32:
            raise ValueError(f"values must be float32, got {self.values.dtype}")
        for t in self.timestamps:
            if not is_synoptic(t):
                raise ValueError(f"timestamp not on a 6-hourly synoptic hour: {t}")
        for a, b in zip(self.timestamps, self.timestamps[1:]):
            if b <= a:
                raise ValueError("timestamps must be strictly increasing")

    def require_storm_vars(self) -> None:
        """Detection inputs must carry exactly the rv850 and mslp fields."""
        if self.variables != STORM_VARS:
            raise ValueError(f"expected variables {STORM_VARS}, got {self.variables}")

    def frame(self, index: int) -> np.ndarray:
        return self.values[index]


def _blob_name(t: datetime) -> str:
    return compact_time(t) + ".f32"


def write_grid_dir(series: GridSeries, path: str | Path) -> Path:
    """Write a grid directory; overwrites manifest and blobs in place."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        f"format: {FORMAT_TAG}",
        f"rows: {series.spec.rows}",
        f"cols: {series.spec.cols}",
        f"lat0_deg: {series.spec.lat0!r}",
        f"lon0_deg: {series.spec.lon0!r}",
        f"cell_deg: {series.spec.cell_deg!r}",
        "vars: " + ",".join(series.variables),
        "dtype: f32le",
        f"layout: {LAYOUT}",
        f"timesteps: {len(series.timestamps)}",
    ]
    for i, t in enumerate(series.timestamps):
        name = _blob_name(t)
        lines.append(f"{format_time(t)} {name}")
        frame = np.ascontiguousarray(series.values[i], dtype="<f4")
        (out / name).write_bytes(frame.tobytes())
    (out / MANIFEST_NAME).write_text("\n".join(lines) + "\n")
    return out


def read_grid_dir(path: str | Path) -> GridSeries:
    root = Path(path)
    manifest = root / MANIFEST_NAME
    if not manifest.is_file():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {root}")
    header: dict[str, str] = {}
    entries: list[tuple[datetime, str]] = []
    n_expected = None
    for raw in manifest.read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if n_expected is None:
            key, _, value = line.partition(":")
            if not _:
                raise ValueError(f"malformed manifest line: {raw!r}")
            header[key.strip()] = value.strip()
            if key.strip() == "timesteps":
                n_expected = int(value)
        else:
            stamp, _, name = line.partition(" ")
            entries.append((parse_time(stamp), name.strip()))
    for required in ("format", "rows", "cols", "vars", "dtype", "timesteps"):
        if required not in header:
            raise ValueError(f"manifest missing key: {required}")
    if header["format"] != FORMAT_TAG:
        raise ValueError(f"unsupported grid format: {header['format']}")
    if header["dtype"] != "f32le":
        raise ValueError(f"unsupported dtype: {header['dtype']}")
    if n_expected != len(entries):
        raise ValueError(f"manifest declares {n_expected} timesteps, lists {len(entries)}")
    spec = GridSpec(
        lat0=float(header.get("lat0_deg", 70.0)),
        lon0=float(header.get("lon0_deg", 100.0)),
        cell_deg=float(header.get("cell_deg", 0.25)),
        rows=int(header["rows"]),
        cols=int(header["cols"]),
    )
    variables = tuple(v.strip() for v in header["vars"].split(",") if v.strip())
    shape = (len(variables), spec.rows, spec.cols)
    frames = np.zeros((len(entries),) + shape, np.float32)
    for i, (t, name) in enumerate(entries):
        blob = (root / name).read_bytes()
        expect = int(np.prod(shape)) * 4
        if len(blob) != expect:
            raise ValueError(f"{name}: expected {expect} bytes, found {len(blob)}")
        frames[i] = np.frombuffer(blob, dtype="<f4").reshape(shape)
    return GridSeries(
        spec=spec,
        variables=variables,
        timestamps=[t for t, _ in entries],
        values=frames,
    )


def write_land_mask(mask: np.ndarray, spec: GridSpec, path: str | Path) -> Path:
    """Store a boolean land mask as a one-variable, one-timestep grid dir."""
    series = GridSeries(
        spec=spec,
        variables=("land",),
        timestamps=[parse_time("2000-01-01T00:00:00Z")],
        values=mask.astype(np.float32).reshape(1, 1, spec.rows, spec.cols),
    )
    return write_grid_dir(series, path)


def read_land_mask(path: str | Path) -> tuple[np.ndarray, GridSpec]:
    series = read_grid_dir(path)
    if series.variables != ("land",):
        raise ValueError(f"land mask must hold a single 'land' variable, got {series.variables}")
    return series.values[0, 0] > 0.5, series.spec
