"""ERA5 ingestion: NetCDF reanalysis slices to portable grid directories.

The archive is not uniform, so the reader copes with the variants that
actually circulate rather than one idealized layout:

* Container. Current CDS downloads are NetCDF-4 (an HDF5 container),
  older mirrors still hold classic NetCDF-3. The two are told apart by
  magic bytes and read through h5py or scipy's netcdf reader; no single
  library in this stack handles both.
* Names. Relative vorticity arrives as "rv850" or as the raw short name
  "vo"; pressure as "mslp" or "msl". Coordinates may be "latitude" or
  "lat", "longitude" or "lon", and time is "time" or "valid_time".
* Packing. Variables are often stored as int16 with scale_factor and
  add_offset attributes; values equal to _FillValue (or missing_value)
  become NaN before unpacking.
* Time. CF-style units strings such as "hours since 1900-01-01 00:00:00.0"
  or "seconds since 1970-01-01". Base dates are parsed leniently because
  writers disagree on fractional-second formatting.

Conversion crops to the configured domain (cell centers, not edges: the
default 0-70N / 100-320E band keeps centers 70.0 down to 0.25 and 100.0
up to 319.75, a 280x880 grid), keeps synoptic hours only, intersects the
timestamps where both variables are present, and writes blobs with the
variable order (rv850, mslp). Output follows the portable grid manifest
rules byte for byte; see gridio.

Sources covering different variables or years can be mixed freely in one
job. Jobs touch only their own output directory, so per-year jobs are
independent and may run in parallel (run_jobs).
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

import h5py
import numpy as np
from scipy.io import netcdf_file

from .gridio import PortableGrids, write_grid
from .timefmt import SYNOPTIC_HOURS

CELL_DEG = 0.25
VARIABLES = ("rv850", "mslp")
_VAR_ALIASES = {"rv850": ("rv850", "vo"), "mslp": ("mslp", "msl")}
_LAT_NAMES = ("latitude", "lat")
_LON_NAMES = ("longitude", "lon")
_TIME_NAMES = ("valid_time", "time")
_CENTER_TOL = 1e-6


class MissingVariableError(ValueError):
    """No source file carries a required variable under any known name."""


class GridMismatchError(ValueError):
    """Source coordinates do not cover the requested 0.25-degree domain."""


@dataclass(frozen=True)
class IngestJob:
    """One conversion: a set of source files into one grid directory.

    The domain is given as closed latitude and half-open longitude bands
    in degrees; cell centers are laid out north to south and west to
    east at 0.25 degrees. Timestamps outside ``years`` or off the
    synoptic hours are dropped.
    """

    sources: tuple[Path, ...]
    out_dir: Path
    years: tuple[int, int] = (1980, 2023)
    lat_band: tuple[float, float] = (0.0, 70.0)
    lon_band: tuple[float, float] = (100.0, 320.0)
    hours: tuple[int, ...] = SYNOPTIC_HOURS

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(Path(p) for p in self.sources))
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        object.__setattr__(self, "hours", tuple(int(h) for h in self.hours))
        if not self.sources:
            raise ValueError("job needs at least one source file")
        if self.years[0] > self.years[1]:
            raise ValueError(f"year range reversed: {self.years}")
        if not self.lat_band[0] < self.lat_band[1]:
            raise ValueError(f"latitude band reversed: {self.lat_band}")
        if not self.lon_band[0] < self.lon_band[1]:
            raise ValueError(f"longitude band reversed: {self.lon_band}")
        if any(h < 0 or h > 23 for h in self.hours):
            raise ValueError(f"hours out of range: {self.hours}")


# --- source containers ---------------------------------------------------


def _attr_str(value) -> str | None:
    if value is None:
        return None
    if isinstance(value, bytes):
        return value.decode("utf-8", errors="replace")
    if isinstance(value, np.ndarray):
        return _attr_str(value.ravel()[0]) if value.size else None
    if isinstance(value, np.bytes_):
        return bytes(value).decode("utf-8", errors="replace")
    return str(value)


def _attr_num(value) -> float | None:
    if value is None:
        return None
    arr = np.asarray(value).ravel()
    return float(arr[0]) if arr.size else None


class _Hdf5Source:
    """NetCDF-4 (HDF5 container) file; datasets live at the root group."""

    def __init__(self, path: Path):
        self.path = path
        self._file = h5py.File(path, "r")

    def close(self):
        self._file.close()

    def names(self) -> set[str]:
        return {k for k, v in self._file.items() if isinstance(v, h5py.Dataset)}

    def raw(self, name: str) -> np.ndarray:
        return self._file[name][()]

    def attr(self, name: str, key: str):
        return self._file[name].attrs.get(key)


class _Nc3Source:
    """Classic NetCDF-3 file via scipy; attributes come back as bytes."""

    def __init__(self, path: Path):
        self.path = path
        # mmap off so arrays stay valid after close
        self._file = netcdf_file(str(path), "r", mmap=False)

    def close(self):
        self._file.close()

    def names(self) -> set[str]:
        return set(self._file.variables)

    def raw(self, name: str) -> np.ndarray:
        return np.array(self._file.variables[name][:])

    def attr(self, name: str, key: str):
        return getattr(self._file.variables[name], key, None)


def _open_source(path: Path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic.startswith(b"\x89HDF"):
        return _Hdf5Source(path)
    if magic.startswith(b"CDF\x01") or magic.startswith(b"CDF\x02"):
        return _Nc3Source(path)
    raise ValueError(f"{path}: not a NetCDF file (magic {magic[:4]!r})")


# --- decoding ------------------------------------------------------------

_UNIT_SECONDS = {
    "second": 1,
    "seconds": 1,
    "minute": 60,
    "minutes": 60,
    "hour": 3600,
    "hours": 3600,
    "day": 86400,
    "days": 86400,
}

# CF base dates are written with whatever second precision the tool felt
# like ("1900-01-01 00:00:00.0"), which strict ISO parsers reject.
_BASE_RE = re.compile(
    r"^(\d{4})-(\d{1,2})-(\d{1,2})"
    r"(?:[ tT](\d{1,2}):(\d{1,2})(?::(\d{1,2}(?:\.\d+)?))?)?"
)


def _decode_times(values: np.ndarray, units: str | None) -> list[datetime]:
    if units is None:
        raise ValueError("time variable has no units attribute")
    m = re.match(r"^\s*(\w+)\s+since\s+(.+?)\s*$", units)
    if not m or m.group(1).lower() not in _UNIT_SECONDS:
        raise ValueError(f"unsupported time units: {units!r}")
    mult = _UNIT_SECONDS[m.group(1).lower()]
    b = _BASE_RE.match(m.group(2))
    if b is None:
        raise ValueError(f"unsupported time base: {m.group(2)!r}")
    base = datetime(
        int(b.group(1)),
        int(b.group(2)),
        int(b.group(3)),
        int(b.group(4) or 0),
        int(b.group(5) or 0),
        tzinfo=timezone.utc,
    ) + timedelta(seconds=float(b.group(6) or 0.0))
    out = []
    for v in np.asarray(values).ravel():
        out.append(base + timedelta(seconds=round(float(v) * mult)))
    return out


def _unpack(raw: np.ndarray, scale, offset, fill) -> np.ndarray:
    data = np.asarray(raw, dtype=np.float64)
    mask = None
    if fill is not None:
        mask = np.asarray(raw, dtype=np.float64) == fill
    if scale is not None:
        data = data * scale
    if offset is not None:
        data = data + offset
    if mask is not None and mask.any():
        data[mask] = np.nan
    return data


def _first_name(names: set[str], candidates: tuple[str, ...]) -> str | None:
    for c in candidates:
        if c in names:
            return c
    return None


def _match_centers(source: np.ndarray, wanted: np.ndarray, axis: str) -> np.ndarray:
    """Index of each wanted cell center in the source coordinate array.

    Works for ascending or descending sources. A center missing from the
    source, which is what a wrong-resolution file looks like, raises
    GridMismatchError naming the first absent coordinate.
    """
    src = np.asarray(source, dtype=np.float64).ravel()
    if src.size == 0:
        raise GridMismatchError(f"{axis} coordinate is empty")
    diff = np.abs(src[None, :] - wanted[:, None])
    idx = diff.argmin(axis=1)
    off = diff[np.arange(len(wanted)), idx]
    bad = np.nonzero(off > _CENTER_TOL)[0]
    if bad.size:
        raise GridMismatchError(
            f"{axis} grid mismatch: source has no {CELL_DEG} deg cell centered at "
            f"{wanted[bad[0]]:g} (nearest is {src[idx[bad[0]]]:g})"
        )
    return idx


def _domain_centers(job: IngestJob) -> tuple[np.ndarray, np.ndarray]:
    lat_lo, lat_hi = job.lat_band
    lon_lo, lon_hi = job.lon_band
    rows = round((lat_hi - lat_lo) / CELL_DEG)
    cols = round((lon_hi - lon_lo) / CELL_DEG)
    # rows run south from the band top; the top center sits on the band edge
    lats = lat_hi - CELL_DEG * np.arange(rows)
    lons = lon_lo + CELL_DEG * np.arange(cols)
    return lats, lons


def convert_era5(job: IngestJob) -> Path:
    """Convert one job's sources into a portable grid directory.

    Raises MissingVariableError if no source carries one of the required
    variables, GridMismatchError if any source is not on the 0.25-degree
    grid covering the domain, and ValueError if the sources share no
    in-range synoptic timestamps.
    """
    lats, lons = _domain_centers(job)
    frames: dict[str, dict[datetime, np.ndarray]] = {v: {} for v in VARIABLES}
    for path in job.sources:
        src = _open_source(path)
        try:
            _ingest_file(src, job, lats, lons, frames)
        finally:
            src.close()

    missing = [v for v in VARIABLES if not frames[v]]
    if missing:
        raise MissingVariableError(
            "sources carry no data for: " + ", ".join(missing)
        )
    common = sorted(set(frames[VARIABLES[0]]) & set(frames[VARIABLES[1]]))
    if not common:
        raise ValueError("sources share no synoptic timestamps inside the year range")

    values = np.empty((len(common), len(VARIABLES), len(lats), len(lons)), dtype="<f4")
    for i, t in enumerate(common):
        for j, var in enumerate(VARIABLES):
            values[i, j] = frames[var][t]
    grids = PortableGrids(
        lat0=float(lats[0]),
        lon0=float(lons[0]),
        cell_deg=CELL_DEG,
        variables=VARIABLES,
        timestamps=tuple(common),
        values=values,
    )
    return write_grid(grids, job.out_dir)


def _ingest_file(src, job: IngestJob, lats: np.ndarray, lons: np.ndarray, frames) -> None:
    names = src.names()
    present = {
        var: _first_name(names, aliases)
        for var, aliases in _VAR_ALIASES.items()
        if _first_name(names, aliases)
    }
    if not present:
        return

    lat_name = _first_name(names, _LAT_NAMES)
    lon_name = _first_name(names, _LON_NAMES)
    time_name = _first_name(names, _TIME_NAMES)
    if lat_name is None or lon_name is None or time_name is None:
        raise ValueError(f"{src.path}: missing coordinate variables")

    times = _decode_times(src.raw(time_name), _attr_str(src.attr(time_name, "units")))
    keep = [
        i
        for i, t in enumerate(times)
        if job.years[0] <= t.year <= job.years[1]
        and t.hour in job.hours
        and t.minute == 0
        and t.second == 0
    ]
    if not keep:
        return

    lat_idx = _match_centers(src.raw(lat_name), lats, "latitude")
    # sources differ on longitude convention; fold into [0, 360) first
    lon_src = np.asarray(src.raw(lon_name), dtype=np.float64) % 360.0
    lon_idx = _match_centers(lon_src, lons, "longitude")

    for var, name in present.items():
        fill = _attr_num(src.attr(name, "_FillValue"))
        if fill is None:
            fill = _attr_num(src.attr(name, "missing_value"))
        data = _unpack(
            src.raw(name),
            _attr_num(src.attr(name, "scale_factor")),
            _attr_num(src.attr(name, "add_offset")),
            fill,
        )
        if data.ndim != 3 or data.shape[0] != len(times):
            raise GridMismatchError(
                f"{src.path}:{name}: expected (time, lat, lon) data, got shape {data.shape}"
            )
        sub = data[np.ix_(keep, lat_idx, lon_idx)].astype("<f4")
        for row, i in enumerate(keep):
            # later sources win on duplicate timestamps
            frames[var][times[i]] = sub[row]


def run_jobs(jobs: list[IngestJob], workers: int = 1) -> list[Path]:
    """Run independent conversion jobs, optionally in a thread pool."""
    if workers <= 1 or len(jobs) <= 1:
        return [convert_era5(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(convert_era5, jobs))
