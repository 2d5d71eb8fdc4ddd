"""Figure rendering over a written report directory.

plot_report turns the report tables into seven PNG files: detection
skill bars, detrended interannual variability lines, the track duration
curve, smoothness box plots, seasonal genesis bars, the matched lat/lon
scatter, and per-track map overlays. Each figure needs only its own
table; a missing table is warned about and skipped so partial reports
still render. An empty smoothness table is skipped the same way because
a box plot of nothing is noise.

Rendering has to be byte-reproducible from unchanged inputs. Everything
goes through the object-oriented Agg backend (no pyplot, no global
state), a fixed rc style is applied for the duration of the call, the
output dpi is pinned, and the PNG "Software" text chunk is suppressed
since it embeds the library version.

The map overlay normally draws on a plain background; the report tables
carry no gridded fields. Passing a portable grid directory as ``grids``
adds a per-cell minimum MSLP background, which is where storm trails
show up.
"""

from __future__ import annotations

import csv
import warnings
from pathlib import Path

import matplotlib
import numpy as np
import yaml
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from matplotlib.lines import Line2D
from matplotlib.ticker import MaxNLocator

from .gridio import PortableGrids, read_grid

DPI = 100
OBSERVED_COLOR = "#1b6ca8"
DETECTED_COLOR = "#d97818"

_STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 10.0,
    "axes.titlesize": 11.0,
    "figure.dpi": float(DPI),
    "savefig.dpi": float(DPI),
}

FIGURE_NAMES = (
    "pod_far.png",
    "iav.png",
    "duration.png",
    "smoothness.png",
    "seasonal.png",
    "latlon_scatter.png",
    "tracks_map.png",
)


def _figure(width: float, height: float) -> Figure:
    fig = Figure(figsize=(width, height))
    FigureCanvasAgg(fig)
    return fig


def _save(fig: Figure, path: Path) -> Path:
    fig.savefig(path, format="png", dpi=DPI, metadata={"Software": None})
    return path


def _read_rows(path: Path) -> list[dict[str, str]]:
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def _num(value) -> float:
    return float(value) if isinstance(value, (int, float)) else float("nan")


def pod_far_figure(summary: dict) -> Figure:
    fig = _figure(4.2, 3.4)
    ax = fig.add_subplot()
    vals = [_num(summary.get("pod")), _num(summary.get("far"))]
    bars = ax.bar(["POD", "FAR"], vals, width=0.55, color=[OBSERVED_COLOR, DETECTED_COLOR])
    for bar, v in zip(bars, vals):
        label = f"{v:.2f}" if np.isfinite(v) else "n/a"
        y = v if np.isfinite(v) else 0.0
        ax.annotate(
            label,
            (bar.get_x() + bar.get_width() / 2, y),
            ha="center",
            va="bottom",
            fontsize=9,
        )
    top = max([v for v in vals if np.isfinite(v)] + [1.0])
    ax.set_ylim(0.0, max(100.0, top * 1.15))
    ax.set_ylabel("percent")
    ax.set_title("Detection skill")
    ax.set_xlabel(
        f"hits {summary.get('hits')}, misses {summary.get('misses')},"
        f" false alarms {summary.get('false_alarms')}",
        fontsize=8,
    )
    fig.subplots_adjust(left=0.16, bottom=0.16)
    return fig


def iav_figure(rows: list[dict], r: float | None = None, month=None) -> Figure:
    """Detrended annual counts; r is annotated, None renders as undefined."""
    fig = _figure(6.4, 3.6)
    ax = fig.add_subplot()
    years = np.array([int(row["year"]) for row in rows])
    series = {
        "observed": np.array([float(row["observed"]) for row in rows]),
        "detected": np.array([float(row["detected"]) for row in rows]),
    }

    def detrend(y: np.ndarray) -> np.ndarray:
        if len(years) < 2:
            return y - y.mean() if len(y) else y
        coef = np.polyfit(years, y, 1)
        return y - np.polyval(coef, years)

    ax.axhline(0.0, color="0.82", lw=0.8, zorder=0)
    ax.plot(years, detrend(series["observed"]), marker="o", color=OBSERVED_COLOR, label="observed")
    ax.plot(years, detrend(series["detected"]), marker="s", color=DETECTED_COLOR, label="detected")
    ax.annotate(
        "detrended r: " + (f"{r:.2f}" if r is not None else "undefined"),
        xy=(0.02, 0.96),
        xycoords="axes fraction",
        va="top",
        fontsize=9,
    )
    ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    ax.set_xlabel("year")
    ax.set_ylabel("track count anomaly")
    ax.set_title("Interannual variability" + (f", month {month}" if month else ""))
    ax.legend(loc="upper right", fontsize=8)
    return fig


def duration_figure(rows: list[dict]) -> Figure:
    fig = _figure(6.0, 3.6)
    ax = fig.add_subplot()
    days = [int(row["days"]) for row in rows]
    ax.plot(
        days,
        [int(row["observed"]) for row in rows],
        drawstyle="steps-mid",
        marker="o",
        color=OBSERVED_COLOR,
        label="observed",
    )
    ax.plot(
        days,
        [int(row["detected"]) for row in rows],
        drawstyle="steps-mid",
        marker="s",
        color=DETECTED_COLOR,
        label="detected",
    )
    ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    ax.yaxis.set_major_locator(MaxNLocator(integer=True))
    ax.set_xlabel("duration (whole days)")
    ax.set_ylabel("tracks")
    ax.set_title("Track duration")
    ax.legend(loc="upper right", fontsize=8)
    return fig


def smoothness_figure(rows: list[dict]) -> Figure:
    fig = _figure(4.6, 3.6)
    ax = fig.add_subplot()
    groups: dict[str, list[float]] = {"observed": [], "detected": []}
    for row in rows:
        groups.setdefault(row["source"], []).append(float(row["sigma_deg"]))
    ax.boxplot(
        [groups["observed"], groups["detected"]],
        tick_labels=["observed", "detected"],
    )
    ax.set_ylabel("bearing variation sigma (deg)")
    ax.set_title("Track smoothness")
    return fig


def seasonal_figure(rows: list[dict]) -> Figure:
    fig = _figure(6.4, 3.6)
    ax = fig.add_subplot()
    months = np.array([int(row["month"]) for row in rows])
    ax.bar(
        months - 0.2,
        [int(row["observed"]) for row in rows],
        width=0.4,
        color=OBSERVED_COLOR,
        label="observed",
    )
    ax.bar(
        months + 0.2,
        [int(row["detected"]) for row in rows],
        width=0.4,
        color=DETECTED_COLOR,
        label="detected",
    )
    ax.set_xticks(range(1, 13))
    ax.set_xlabel("month")
    ax.set_ylabel("genesis count")
    ax.set_title("Seasonal cycle")
    ax.legend(loc="upper right", fontsize=8)
    return fig


def scatter_figure(rows: list[dict]) -> Figure:
    """Observed vs detected positions, colored by MSW where it is known."""
    fig = _figure(8.4, 4.0)
    axes = fig.subplots(1, 2)
    with_wind = [row for row in rows if row.get("msw", "").strip()]
    without_wind = [row for row in rows if not row.get("msw", "").strip()]
    mappable = None
    panels = (
        ("true_lat", "pred_lat", "latitude (deg N)"),
        ("true_lon", "pred_lon", "longitude (deg E)"),
    )
    for ax, (tkey, pkey, label) in zip(axes, panels):
        pts: list[float] = []
        if without_wind:
            x = [float(row[tkey]) for row in without_wind]
            y = [float(row[pkey]) for row in without_wind]
            ax.scatter(x, y, s=16, color="0.6", zorder=2)
            pts += x + y
        if with_wind:
            x = [float(row[tkey]) for row in with_wind]
            y = [float(row[pkey]) for row in with_wind]
            mappable = ax.scatter(
                x,
                y,
                s=16,
                c=[float(row["msw"]) for row in with_wind],
                cmap="viridis",
                zorder=3,
            )
            pts += x + y
        if pts:
            lo, hi = min(pts), max(pts)
            pad = 0.02 * (hi - lo) or 0.5
            ax.plot(
                [lo - pad, hi + pad],
                [lo - pad, hi + pad],
                color="0.3",
                lw=0.8,
                zorder=1,
            )
        ax.set_xlabel("observed " + label)
        ax.set_ylabel("detected " + label)
        ax.set_aspect("equal", adjustable="box")
    if mappable is not None:
        fig.colorbar(mappable, ax=list(axes), label="MSW", shrink=0.85)
    fig.suptitle("Matched position scatter")
    return fig


def _chains(rows: list[dict]) -> list[list[tuple[float, float]]]:
    by_id: dict[str, list[tuple[str, float, float]]] = {}
    for row in rows:
        by_id.setdefault(row["track_id"], []).append(
            (row["iso_time"], float(row["lon"]), float(row["lat"]))
        )
    out = []
    for tid in sorted(by_id):
        out.append([(lon, lat) for _, lon, lat in sorted(by_id[tid])])
    return out


def tracks_figure(
    observed: list[dict],
    detected: list[dict],
    background: PortableGrids | None = None,
) -> Figure:
    fig = _figure(7.6, 4.8)
    ax = fig.add_subplot()
    if background is not None:
        var = "mslp" if "mslp" in background.variables else background.variables[0]
        field = background.values[:, background.variables.index(var)].min(axis=0)
        half = background.cell_deg / 2
        extent = (
            background.lon0 - half,
            background.lon0 + background.cell_deg * (background.cols - 0.5),
            background.lat0 - background.cell_deg * (background.rows - 0.5),
            background.lat0 + half,
        )
        image = ax.imshow(
            np.asarray(field, dtype=np.float64),
            origin="upper",
            extent=extent,
            cmap="viridis",
            aspect="auto",
            interpolation="nearest",
            zorder=0,
        )
        fig.colorbar(image, ax=ax, label=f"min {var}")
    else:
        ax.set_facecolor("#eef1f5")
        ax.grid(color="white", lw=0.8, zorder=0)
    for chain in _chains(observed):
        lons = [p[0] for p in chain]
        lats = [p[1] for p in chain]
        ax.plot(lons, lats, color=OBSERVED_COLOR, lw=1.5, alpha=0.9, zorder=2)
        ax.plot(lons[:1], lats[:1], marker="o", ms=4, color=OBSERVED_COLOR, zorder=2)
    for chain in _chains(detected):
        lons = [p[0] for p in chain]
        lats = [p[1] for p in chain]
        ax.plot(lons, lats, color=DETECTED_COLOR, lw=1.3, ls="--", alpha=0.9, zorder=3)
        ax.plot(lons[:1], lats[:1], marker="s", ms=4, color=DETECTED_COLOR, zorder=3)
    ax.legend(
        handles=[
            Line2D([], [], color=OBSERVED_COLOR, lw=1.5, label="observed"),
            Line2D([], [], color=DETECTED_COLOR, lw=1.3, ls="--", label="detected"),
        ],
        loc="upper right",
        fontsize=8,
    )
    ax.set_xlabel("longitude (deg E)")
    ax.set_ylabel("latitude (deg N)")
    ax.set_title("Track overlays" + (" on minimum MSLP" if background is not None else ""))
    return fig


def _have(base: Path, table: str, figname: str) -> bool:
    if (base / table).is_file():
        return True
    warnings.warn(f"missing {table}; skipping {figname}")
    return False


def plot_report(
    report_dir: str | Path,
    out_dir: str | Path | None = None,
    grids: str | Path | None = None,
) -> list[Path]:
    """Render every figure whose table exists; returns the written paths."""
    base = Path(report_dir)
    if not base.is_dir():
        raise FileNotFoundError(f"report directory not found: {base}")
    out = Path(out_dir) if out_dir is not None else base / "figures"
    out.mkdir(parents=True, exist_ok=True)
    summary = None
    if (base / "summary.yaml").is_file():
        summary = yaml.safe_load((base / "summary.yaml").read_text())
    background = read_grid(grids) if grids is not None else None

    written: list[Path] = []
    with matplotlib.rc_context(_STYLE):
        if _have(base, "summary.yaml", "pod_far.png"):
            written.append(_save(pod_far_figure(summary), out / "pod_far.png"))

        if _have(base, "iav.csv", "iav.png"):
            rows = _read_rows(base / "iav.csv")
            r = summary.get("iav_pearson_detrended") if summary else None
            month = summary.get("month") if summary else None
            written.append(_save(iav_figure(rows, r=r, month=month), out / "iav.png"))

        if _have(base, "duration_hist.csv", "duration.png"):
            rows = _read_rows(base / "duration_hist.csv")
            written.append(_save(duration_figure(rows), out / "duration.png"))

        if _have(base, "smoothness.csv", "smoothness.png"):
            rows = _read_rows(base / "smoothness.csv")
            if rows:
                written.append(_save(smoothness_figure(rows), out / "smoothness.png"))
            else:
                warnings.warn("smoothness.csv has no rows; skipping smoothness.png")

        if _have(base, "seasonal.csv", "seasonal.png"):
            rows = _read_rows(base / "seasonal.csv")
            written.append(_save(seasonal_figure(rows), out / "seasonal.png"))

        if _have(base, "latlon_scatter.csv", "latlon_scatter.png"):
            rows = _read_rows(base / "latlon_scatter.csv")
            written.append(_save(scatter_figure(rows), out / "latlon_scatter.png"))

        if _have(base, "tracks_observed.csv", "tracks_map.png") and _have(
            base, "tracks_detected.csv", "tracks_map.png"
        ):
            fig = tracks_figure(
                _read_rows(base / "tracks_observed.csv"),
                _read_rows(base / "tracks_detected.csv"),
                background,
            )
            written.append(_save(fig, out / "tracks_map.png"))
    return written
