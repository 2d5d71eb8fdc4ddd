"""IBTrACS CSV ingestion into the best-track interchange format.

IBTrACS ships one wide CSV with a header row followed by a units row
("Year", "degrees_north", ...), which is skipped here along with any
other row whose timestamp does not parse. Only the columns named in
REQUIRED_COLUMNS are consumed; everything else is ignored, so agency
columns can come and go without breaking conversion. A missing required
column is schema drift and raises SchemaError naming the offenders.

Filtering follows the track selection used by the verification pipeline:
only consolidated "main" tracks survive (spur and provisional rows are
less reliable and drop), only exact synoptic hours are kept, longitudes
fold into [0, 360), and points outside the domain window drop while the
rest of their storm is kept. All six nature codes pass through.
"""

from __future__ import annotations

import csv
from datetime import datetime, timezone
from pathlib import Path

from .timefmt import SYNOPTIC_HOURS, format_time

REQUIRED_COLUMNS = ("SID", "ISO_TIME", "NATURE", "LAT", "LON", "TRACK_TYPE", "BASIN", "WMO_WIND")
NATURES = frozenset({"NR", "MX", "DS", "TS", "ET", "SS"})
OUT_HEADER = ["storm_id", "iso_time", "lat", "lon", "msw", "nature", "track_type", "basin"]


class SchemaError(ValueError):
    """The source header lacks required columns."""


def _parse_iso(value: str) -> datetime | None:
    try:
        dt = datetime.strptime(value.strip(), "%Y-%m-%d %H:%M:%S")
    except ValueError:
        return None
    return dt.replace(tzinfo=timezone.utc)


def convert_ibtracs(
    source: str | Path,
    out_path: str | Path,
    years: tuple[int, int] = (1980, 2023),
    lat_band: tuple[float, float] = (0.0, 70.0),
    lon_band: tuple[float, float] = (100.0, 320.0),
    hours: tuple[int, ...] = SYNOPTIC_HOURS,
) -> Path:
    """Filter an IBTrACS CSV into a best-track file; returns the output path."""
    src = Path(source)
    out = Path(out_path)
    with src.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{src}: empty file") from None
        if header:
            header[0] = header[0].lstrip("﻿")
        index = {name.strip(): i for i, name in enumerate(header)}
        missing = [c for c in REQUIRED_COLUMNS if c not in index]
        if missing:
            raise SchemaError(f"{src}: missing column(s): " + ", ".join(missing))
        cols = {c: index[c] for c in REQUIRED_COLUMNS}
        width = max(cols.values()) + 1

        kept: list[list[str]] = []
        for row in reader:
            if len(row) < width:
                continue
            time = _parse_iso(row[cols["ISO_TIME"]])
            if time is None:
                # the units row and malformed rows land here
                continue
            if row[cols["TRACK_TYPE"]].strip() != "main":
                continue
            if time.hour not in hours or time.minute != 0 or time.second != 0:
                continue
            if not years[0] <= time.year <= years[1]:
                continue
            nature = row[cols["NATURE"]].strip()
            if nature not in NATURES:
                continue
            try:
                lat = float(row[cols["LAT"]])
                lon = float(row[cols["LON"]]) % 360.0
            except ValueError:
                continue
            if not (lat_band[0] <= lat <= lat_band[1] and lon_band[0] <= lon < lon_band[1]):
                continue
            wind = row[cols["WMO_WIND"]].strip()
            kept.append(
                [
                    row[cols["SID"]].strip(),
                    format_time(time),
                    repr(lat),
                    repr(lon),
                    repr(float(wind)) if wind else "",
                    nature,
                    "main",
                    row[cols["BASIN"]].strip(),
                ]
            )

    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(OUT_HEADER)
        writer.writerows(kept)
    return out
