"""Portable grid directories, the flat-file interface to the tracking core.

A grid directory is manifest.txt plus one raw little-endian float32 blob
per timestep. The manifest is line oriented: fixed header keys, then one
"<iso time> <blob name>" line per timestep. Blobs hold (var, row, col)
with row 0 along the northern edge. Header floats are serialized with
repr() and nothing records wall clock time, so writing the same series
twice produces identical bytes. The tracking core ships its own reader
and writer for this format; this module must match them exactly, and the
test suite holds the two implementations against each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np

from .timefmt import compact_time, format_time, parse_time

MANIFEST_NAME = "manifest.txt"
FORMAT_TAG = "portable-grid-v1"
LAYOUT = "time-major, var-major, row-major from NW corner"


@dataclass(frozen=True)
class PortableGrids:
    """One gridded series: cell centers start at (lat0, lon0), lat decreasing."""

    lat0: float
    lon0: float
    cell_deg: float
    variables: tuple[str, ...]
    timestamps: tuple[datetime, ...]
    values: np.ndarray  # (time, var, row, col) float32

    def __post_init__(self):
        vals = np.asarray(self.values, dtype="<f4")
        if vals.ndim != 4:
            raise ValueError("values must have shape (time, var, row, col)")
        if vals.shape[0] != len(self.timestamps):
            raise ValueError("values first axis must match timestamps")
        if vals.shape[1] != len(self.variables):
            raise ValueError("values second axis must match variables")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "timestamps", tuple(self.timestamps))

    @property
    def rows(self) -> int:
        return self.values.shape[2]

    @property
    def cols(self) -> int:
        return self.values.shape[3]


def _blob_name(t: datetime) -> str:
    return compact_time(t) + ".f32"


def write_grid(grids: PortableGrids, path: str | Path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        f"format: {FORMAT_TAG}",
        f"rows: {grids.rows}",
        f"cols: {grids.cols}",
        f"lat0_deg: {grids.lat0!r}",
        f"lon0_deg: {grids.lon0!r}",
        f"cell_deg: {grids.cell_deg!r}",
        "vars: " + ",".join(grids.variables),
        "dtype: f32le",
        f"layout: {LAYOUT}",
        f"timesteps: {len(grids.timestamps)}",
    ]
    for i, t in enumerate(grids.timestamps):
        name = _blob_name(t)
        lines.append(f"{format_time(t)} {name}")
        frame = np.ascontiguousarray(grids.values[i], dtype="<f4")
        (out / name).write_bytes(frame.tobytes())
    (out / MANIFEST_NAME).write_text("\n".join(lines) + "\n")
    return out


def read_grid(path: str | Path) -> PortableGrids:
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
            key, sep, value = line.partition(":")
            if not sep:
                raise ValueError(f"malformed manifest line: {raw!r}")
            header[key.strip()] = value.strip()
            if key.strip() == "timesteps":
                n_expected = int(value)
        else:
            stamp, sep, name = line.partition(" ")
            if not sep:
                raise ValueError(f"malformed manifest entry: {raw!r}")
            entries.append((parse_time(stamp), name.strip()))
    if header.get("format") != FORMAT_TAG:
        raise ValueError(f"unsupported grid format: {header.get('format')!r}")
    if header.get("dtype") != "f32le":
        raise ValueError(f"unsupported grid dtype: {header.get('dtype')!r}")
    if n_expected is None or len(entries) != n_expected:
        raise ValueError("manifest timestep count does not match entry lines")
    rows = int(header["rows"])
    cols = int(header["cols"])
    variables = tuple(v.strip() for v in header["vars"].split(",") if v.strip())
    values = np.empty((len(entries), len(variables), rows, cols), dtype="<f4")
    for i, (_, name) in enumerate(entries):
        blob = (root / name).read_bytes()
        frame = np.frombuffer(blob, dtype="<f4")
        if frame.size != len(variables) * rows * cols:
            raise ValueError(f"blob {name} has wrong size for {rows}x{cols} grid")
        values[i] = frame.reshape(len(variables), rows, cols)
    return PortableGrids(
        lat0=float(header["lat0_deg"]),
        lon0=float(header["lon0_deg"]),
        cell_deg=float(header["cell_deg"]),
        variables=variables,
        timestamps=tuple(t for t, _ in entries),
        values=values,
    )
