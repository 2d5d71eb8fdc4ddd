"""Report rendering: a machine-readable summary, CSV tables, and a text view.

The CSV tables are the contract with downstream plotting: iav.csv,
duration_hist.csv, smoothness.csv, seasonal.csv, latlon_scatter.csv,
plus verbatim track copies for map overlays. Nothing here embeds wall
clock time, so rewriting an unchanged report is byte-identical.
"""

from __future__ import annotations

import csv
from pathlib import Path

import yaml

from .geo import track_smoothness_deg
from .metrics import MetricsReport, RefTrack, ref_tracks_from_tracker
from .timeutil import format_time
from .tracker import Track, write_tracks

SUMMARY_NAME = "summary.yaml"
TABLE_NAMES = (
    "iav.csv",
    "duration_hist.csv",
    "smoothness.csv",
    "seasonal.csv",
    "latlon_scatter.csv",
)
OBSERVED_TRACKS_NAME = "tracks_observed.csv"
DETECTED_TRACKS_NAME = "tracks_detected.csv"
TEXT_NAME = "report.txt"


def write_ref_tracks(tracks: list[RefTrack], path: str | Path) -> Path:
    """Reference tracks in the tracks-file column layout; score is fixed at 1."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for t in tracks:
        for time, point in zip(t.times, t.points):
            rows.append((t.track_id, time, point.lat, point.lon))
    rows.sort(key=lambda r: (r[0], r[1]))
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["track_id", "iso_time", "lat", "lon", "score"])
        for track_id, time, lat, lon in rows:
            writer.writerow([track_id, format_time(time), f"{lat:.6f}", f"{lon:.6f}", "1.000000"])
    return out


def _smoothness_rows(tracks: list[RefTrack], source: str) -> list[list[str]]:
    rows = []
    for t in tracks:
        try:
            sigma = track_smoothness_deg(list(t.points))
        except ValueError:
            continue
        rows.append([t.track_id, source, f"{sigma:.6f}"])
    return rows


def write_metrics_report(
    report: MetricsReport,
    observed: list[RefTrack],
    detected: list[Track],
    out_dir: str | Path,
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    summary = {
        "pod": report.pod,
        "far": report.far,
        "hits": report.match.hits,
        "misses": report.match.misses,
        "false_alarms": report.match.false_alarms,
        "match_radius_km": report.match.radius_km,
        "min_matched_steps": report.match.min_matched_steps,
        "month": report.month,
        "years": list(report.years),
        "iav_pearson_detrended": report.iav_pearson_detrended,
        "observed_tracks": len(observed),
        "detected_tracks": len(detected),
        "matched_pairs": len(report.match.pairs),
        "scatter_points": len(report.latlon),
        "smoothness": {
            "observed": _smoothness_summary(report.smoothness_observed),
            "detected": _smoothness_summary(report.smoothness_detected),
        },
    }
    (out / SUMMARY_NAME).write_text(yaml.safe_dump(summary, sort_keys=True))

    with (out / "iav.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["year", "observed", "detected"])
        for year, o, d in zip(report.years, report.iav_observed, report.iav_detected):
            writer.writerow([year, o, d])

    with (out / "duration_hist.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["days", "observed", "detected"])
        bins = sorted(set(report.duration_observed) | set(report.duration_detected))
        for b in bins:
            writer.writerow(
                [b, report.duration_observed.get(b, 0), report.duration_detected.get(b, 0)]
            )

    with (out / "smoothness.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["track_id", "source", "sigma_deg"])
        writer.writerows(_smoothness_rows(observed, "observed"))
        writer.writerows(_smoothness_rows(ref_tracks_from_tracker(detected), "detected"))

    with (out / "seasonal.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["month", "observed", "detected"])
        for m in range(1, 13):
            writer.writerow([m, report.seasonal_observed[m], report.seasonal_detected[m]])

    with (out / "latlon_scatter.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true_lat", "true_lon", "pred_lat", "pred_lon", "msw"])
        for true, pred, msw in report.latlon:
            writer.writerow(
                [
                    f"{true.lat:.6f}",
                    f"{true.lon:.6f}",
                    f"{pred.lat:.6f}",
                    f"{pred.lon:.6f}",
                    "" if msw is None else f"{msw:.6f}",
                ]
            )

    write_ref_tracks(observed, out / OBSERVED_TRACKS_NAME)
    write_tracks(detected, out / DETECTED_TRACKS_NAME)
    return out


def _smoothness_summary(stats) -> dict:
    return {
        "n": len(stats.sigmas),
        "n_excluded": stats.n_excluded,
        "q1": stats.q1,
        "median": stats.median,
        "q3": stats.q3,
    }


def _read_table(path: Path) -> list[dict[str, str]]:
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def render_text_report(report_dir: str | Path) -> str:
    """Human-readable view over a written report directory."""
    base = Path(report_dir)
    summary = yaml.safe_load((base / SUMMARY_NAME).read_text())
    lines = []
    lines.append("STORM TRACK VERIFICATION REPORT")
    lines.append("=" * 31)
    lines.append("")
    lines.append("Detection skill")
    lines.append(
        f"  POD: {summary['pod']:.2f} %  (hits {summary['hits']}, misses {summary['misses']})"
    )
    lines.append(
        f"  FAR: {summary['far']:.2f} %  (false alarms {summary['false_alarms']},"
        f" radius {summary['match_radius_km']:.0f} km)"
    )
    lines.append(
        f"  tracks: {summary['observed_tracks']} observed, {summary['detected_tracks']} detected,"
        f" {summary['matched_pairs']} matched pairs"
    )
    lines.append("")

    lines.append(f"Interannual variability, month {summary['month']}")
    lines.append("  year  observed  detected")
    for row in _read_table(base / "iav.csv"):
        lines.append(f"  {row['year']:>4}  {row['observed']:>8}  {row['detected']:>8}")
    r = summary["iav_pearson_detrended"]
    lines.append(
        "  detrended Pearson r: " + ("undefined" if r is None else f"{r:.4f}")
    )
    lines.append("")

    lines.append("Track duration histogram (whole days)")
    lines.append("  days  observed  detected")
    for row in _read_table(base / "duration_hist.csv"):
        lines.append(f"  {row['days']:>4}  {row['observed']:>8}  {row['detected']:>8}")
    lines.append("")

    lines.append("Bearing-variation smoothness (deg)")
    lines.append("  source     n  excluded      q1  median      q3")
    for source in ("observed", "detected"):
        s = summary["smoothness"][source]
        if s["median"] is None:
            lines.append(f"  {source:<9} {s['n']:>2}  {s['n_excluded']:>8}     n/a     n/a     n/a")
        else:
            lines.append(
                f"  {source:<9} {s['n']:>2}  {s['n_excluded']:>8}"
                f"  {s['q1']:>6.2f}  {s['median']:>6.2f}  {s['q3']:>6.2f}"
            )
    lines.append("")

    lines.append("Seasonal genesis counts")
    lines.append("  month  observed  detected")
    for row in _read_table(base / "seasonal.csv"):
        lines.append(f"  {row['month']:>5}  {row['observed']:>8}  {row['detected']:>8}")
    lines.append("")

    lines.append(
        f"Position scatter: {summary['scatter_points']} matched point pairs"
        " (latlon_scatter.csv)"
    )
    lines.append("")
    return "\n".join(lines)


def write_text_report(report_dir: str | Path) -> Path:
    base = Path(report_dir)
    out = base / TEXT_NAME
    out.write_text(render_text_report(base))
    return out
