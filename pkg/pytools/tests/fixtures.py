"""Builders for synthetic NetCDF sources, IBTrACS slices, and report tables."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone
from pathlib import Path

import h5py
import numpy as np
import yaml
from scipy.io import netcdf_file

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
CF_1900 = datetime(1900, 1, 1, tzinfo=timezone.utc)
FILL_I2 = -32767


def utc(*args) -> datetime:
    return datetime(*args, tzinfo=timezone.utc)


def seconds_since_epoch(dt: datetime) -> int:
    return int((dt - EPOCH).total_seconds())


def hours_since_1900(dt: datetime) -> int:
    return int((dt - CF_1900).total_seconds() // 3600)


def pack_int16(data: np.ndarray) -> tuple[float, float, np.ndarray]:
    """ERA5-style int16 packing with per-array scale and offset."""
    arr = np.asarray(data, dtype="f8")
    vmin, vmax = float(arr.min()), float(arr.max())
    scale = (vmax - vmin) / 60000.0 or 1.0
    offset = (vmax + vmin) / 2.0
    stored = np.round((arr - offset) / scale).astype("i2")
    return scale, offset, stored


def unpack_int16(stored: np.ndarray, scale: float, offset: float) -> np.ndarray:
    return stored.astype("f8") * scale + offset


def write_nc4(
    path,
    lat: np.ndarray,
    lon: np.ndarray,
    time_values: np.ndarray,
    variables: dict[str, tuple[np.ndarray, bool]],
    time_name: str = "valid_time",
    time_units: str = "seconds since 1970-01-01",
) -> Path:
    """NetCDF-4 style HDF5 file; variables map name -> (data, packed)."""
    with h5py.File(path, "w") as f:
        f.create_dataset("latitude", data=np.asarray(lat, "f8"))
        f.create_dataset("longitude", data=np.asarray(lon, "f8"))
        t = f.create_dataset(time_name, data=np.asarray(time_values, "i8"))
        t.attrs["units"] = time_units
        for name, (data, packed) in variables.items():
            if packed:
                scale, offset, stored = pack_int16(data)
                d = f.create_dataset(name, data=stored)
                d.attrs["scale_factor"] = scale
                d.attrs["add_offset"] = offset
                d.attrs["_FillValue"] = np.int16(FILL_I2)
            else:
                f.create_dataset(name, data=np.asarray(data, "f4"))
    return Path(path)


def write_nc3(
    path,
    lat: np.ndarray,
    lon: np.ndarray,
    hour_values: np.ndarray,
    variables: dict[str, np.ndarray],
) -> Path:
    """Classic NetCDF-3 file with CF hours-since-1900 time."""
    f = netcdf_file(str(path), "w")
    f.createDimension("time", len(hour_values))
    f.createDimension("lat", len(lat))
    f.createDimension("lon", len(lon))
    vt = f.createVariable("time", "i", ("time",))
    vt[:] = np.asarray(hour_values, "i4")
    vt.units = "hours since 1900-01-01 00:00:00.0"
    vla = f.createVariable("lat", "d", ("lat",))
    vla[:] = np.asarray(lat, "f8")
    vlo = f.createVariable("lon", "d", ("lon",))
    vlo[:] = np.asarray(lon, "f8")
    for name, data in variables.items():
        v = f.createVariable(name, "f", ("time", "lat", "lon"))
        v[:] = np.asarray(data, "f4")
    f.close()
    return Path(path)


def margin_domain() -> tuple[np.ndarray, np.ndarray]:
    """Full 0.25-degree default domain plus one spare cell on every side."""
    lat = 70.25 - 0.25 * np.arange(283)  # 70.25 .. -0.25, descending
    lon = 99.75 + 0.25 * np.arange(882)  # 99.75 .. 320.0
    return lat, lon


def crop_indices(lat: np.ndarray, lon: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Source indices of the default domain's cell centers."""
    want_lat = 70.0 - 0.25 * np.arange(280)
    want_lon = 100.0 + 0.25 * np.arange(880)
    li = np.abs(np.asarray(lat)[None, :] - want_lat[:, None]).argmin(axis=1)
    oi = np.abs(np.asarray(lon)[None, :] - want_lon[:, None]).argmin(axis=1)
    return li, oi


def dir_bytes(path: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(Path(path).iterdir()) if p.is_file()}


def write_report_fixture(base: Path) -> Path:
    """A small fixed report directory in the layout the tracking core writes."""
    base.mkdir(parents=True, exist_ok=True)
    (base / "summary.yaml").write_text(
        yaml.safe_dump(
            {
                "pod": 85.05,
                "far": 23.26,
                "hits": 170,
                "misses": 30,
                "false_alarms": 52,
                "match_radius_km": 300.0,
                "min_matched_steps": 2,
                "month": 9,
                "years": [1995, 1996, 1997, 1998, 1999],
                "iav_pearson_detrended": 0.75,
                "observed_tracks": 3,
                "detected_tracks": 3,
                "matched_pairs": 2,
                "scatter_points": 3,
                "smoothness": {
                    "observed": {"n": 2, "n_excluded": 0, "q1": 12.0, "median": 15.0, "q3": 20.0},
                    "detected": {"n": 2, "n_excluded": 0, "q1": 14.0, "median": 18.0, "q3": 24.0},
                },
            },
            sort_keys=True,
        )
    )
    (base / "iav.csv").write_text(
        "year,observed,detected\n1995,12,10\n1996,15,14\n1997,9,8\n1998,13,13\n1999,11,9\n"
    )
    (base / "duration_hist.csv").write_text(
        "days,observed,detected\n2,1,2\n3,4,3\n4,2,2\n6,1,0\n"
    )
    (base / "smoothness.csv").write_text(
        "track_id,source,sigma_deg\n"
        "obs-1,observed,14.5\n"
        "obs-2,observed,20.25\n"
        "1,detected,16.0\n"
        "2,detected,22.5\n"
    )
    (base / "seasonal.csv").write_text(
        "month,observed,detected\n"
        + "".join(f"{m},{m % 5},{(m + 1) % 5}\n" for m in range(1, 13))
    )
    (base / "latlon_scatter.csv").write_text(
        "true_lat,true_lon,pred_lat,pred_lon,msw\n"
        "15.000000,140.000000,15.200000,140.300000,35.000000\n"
        "16.100000,141.200000,16.000000,141.000000,\n"
        "17.500000,142.500000,17.400000,142.800000,55.000000\n"
    )
    (base / "tracks_observed.csv").write_text(
        "track_id,iso_time,lat,lon,score\n"
        "obs-1,1995-08-01T00:00:00Z,15.000000,140.000000,1.000000\n"
        "obs-1,1995-08-01T06:00:00Z,15.400000,140.800000,1.000000\n"
        "obs-1,1995-08-01T12:00:00Z,15.900000,141.700000,1.000000\n"
        "obs-2,1995-08-03T00:00:00Z,18.000000,150.000000,1.000000\n"
        "obs-2,1995-08-03T06:00:00Z,18.500000,150.600000,1.000000\n"
    )
    (base / "tracks_detected.csv").write_text(
        "track_id,iso_time,lat,lon,score\n"
        "1,1995-08-01T00:00:00Z,15.100000,140.100000,0.900000\n"
        "1,1995-08-01T06:00:00Z,15.500000,140.900000,0.910000\n"
        "1,1995-08-01T12:00:00Z,16.000000,141.800000,0.920000\n"
    )
    return base
