"""UTC timestamp helpers shared by the converters and the grid writer."""

from __future__ import annotations

from datetime import datetime, timezone

SYNOPTIC_HOURS = (0, 6, 12, 18)


def parse_time(s: str) -> datetime:
    raw = s.strip()
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    dt = datetime.fromisoformat(raw)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_time(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def compact_time(dt: datetime) -> str:
    """Filename-safe form, e.g. 19950801T0600."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).strftime("%Y%m%dT%H%M")


def is_synoptic(dt: datetime) -> bool:
    return dt.hour in SYNOPTIC_HOURS and dt.minute == 0 and dt.second == 0 and dt.microsecond == 0
