"""Detectors that turn gridded fields into per-timestep storm-center candidates.

Two interchangeable detectors are provided.  The neural one runs the
classification network over all 40x40 tiles of a frame and asks the
localization network for a sub-tile center wherever the classifier fires.
The physics baseline needs no training: it looks for pressure minima
backed by a nearby cyclonic-vorticity maximum, which is enough to
exercise the tracker and the metric suite on synthetic data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .geo import GridSpec
from .grids import GridSeries
from .nn import Network, predict
from .patches import PATCH_SIZE, patchify
from .timeutil import format_time, parse_time
from .tracker import Detection

BBOX_SIZES = (15, 21, 25, 31, 35)

DETECTIONS_HEADER = ["iso_time", "row", "col", "lat", "lon", "score"]


@dataclass(frozen=True)
class DetectorParams:
    class_threshold: float = 0.5
    bbox_size: int = 21
    dedupe_radius_cells: int = 8

    def __post_init__(self) -> None:
        if not 0.0 < self.class_threshold < 1.0:
            raise ValueError(f"class_threshold must lie in (0, 1), got {self.class_threshold}")
        if self.bbox_size not in BBOX_SIZES:
            raise ValueError(f"bbox_size must be one of {BBOX_SIZES}, got {self.bbox_size}")
        if self.dedupe_radius_cells < 0:
            raise ValueError("dedupe_radius_cells must be non-negative")


def dedupe(detections: list[Detection], radius_cells: int) -> list[Detection]:
    """Greedy suppression: keep score-descending, drop anything within the radius.

    Ties break toward the lexicographically smaller (row, col) so the
    result never depends on input order.
    """
    for d in detections[1:]:
        if d.time != detections[0].time:
            raise ValueError("dedupe expects detections from a single timestep")
    ranked = sorted(detections, key=lambda d: (-d.score, d.row, d.col))
    kept: list[Detection] = []
    for d in ranked:
        crowded = any(
            max(abs(d.row - k.row), abs(d.col - k.col)) <= radius_cells for k in kept
        )
        if not crowded:
            kept.append(d)
    return kept


def detect_neural(
    series: GridSeries,
    classifier: Network,
    localizer: Network,
    params: DetectorParams = DetectorParams(),
) -> list[Detection]:
    """Two-stage detection: tile classification, then per-tile center regression."""
    series.require_storm_vars()
    out: list[Detection] = []
    for t, stamp in enumerate(series.timestamps):
        patches = patchify(series.values[t], stamp)
        pixels = np.stack([p.pixels for p in patches]).astype(np.float64)
        probs = predict(classifier, pixels)
        hits = [i for i in range(len(patches)) if probs[i] >= params.class_threshold]
        dets: list[Detection] = []
        if hits:
            local = predict(localizer, pixels[hits])
            local = np.clip(local, 0.0, PATCH_SIZE - 1.0)
            for i, idx in enumerate(hits):
                p = patches[idx]
                row = PATCH_SIZE * p.patch_row + float(local[i, 0])
                col = PATCH_SIZE * p.patch_col + float(local[i, 1])
                dets.append(Detection.from_cell(stamp, row, col, float(probs[idx]), series.spec))
        out.extend(dedupe(dets, params.dedupe_radius_cells))
    return out


def _strict_extrema(field: np.ndarray, minima: bool) -> np.ndarray:
    # strict against every neighbour in the 7x7 ring; borders pad with the
    # identity element so edge cells can still qualify
    footprint = np.ones((7, 7), dtype=bool)
    footprint[3, 3] = False
    if minima:
        ring = ndimage.minimum_filter(field, footprint=footprint, mode="constant", cval=np.inf)
        return field < ring
    ring = ndimage.maximum_filter(field, footprint=footprint, mode="constant", cval=-np.inf)
    return field > ring


def detect_physics_baseline(
    series: GridSeries, params: DetectorParams = DetectorParams()
) -> list[Detection]:
    """Pressure-minimum detector with a vorticity coincidence check.

    A cell qualifies when it is a strict MSLP minimum over its 7x7
    neighbourhood and some positive strict RV850 maximum lies within 4
    cells.  The score is the pressure deficit against the deepest
    deficit found at that timestep, so the clearest storm scores 1.
    """
    series.require_storm_vars()
    rv_idx = series.variables.index("rv850")
    mslp_idx = series.variables.index("mslp")
    out: list[Detection] = []
    for t, stamp in enumerate(series.timestamps):
        rv = series.values[t, rv_idx].astype(np.float64)
        mslp = series.values[t, mslp_idx].astype(np.float64)
        minima = _strict_extrema(mslp, minima=True)
        maxima = _strict_extrema(rv, minima=False) & (rv > 0.0)
        near_max = ndimage.maximum_filter(
            maxima.astype(np.uint8), size=9, mode="constant", cval=0
        ).astype(bool)
        rows, cols = np.nonzero(minima & near_max)
        if rows.size == 0:
            continue
        nbhd_max = ndimage.maximum_filter(mslp, size=7, mode="constant", cval=-np.inf)
        depths = nbhd_max[rows, cols] - mslp[rows, cols]
        top = float(depths.max())
        dets = [
            Detection.from_cell(stamp, float(r), float(c), float(d / top), series.spec)
            for r, c, d in zip(rows, cols, depths)
        ]
        out.extend(dedupe(dets, params.dedupe_radius_cells))
    return out


def write_detections(detections: list[Detection], path: str | Path) -> Path:
    path = Path(path)
    rows = sorted(detections, key=lambda d: (d.time, d.row, d.col))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DETECTIONS_HEADER)
        for d in rows:
            writer.writerow(
                [
                    format_time(d.time),
                    f"{d.row:.6f}",
                    f"{d.col:.6f}",
                    f"{d.lat:.6f}",
                    f"{d.lon:.6f}",
                    f"{d.score:.6f}",
                ]
            )
    return path


def read_detections(path: str | Path, spec: GridSpec = GridSpec()) -> list[Detection]:
    """File-based detector: the written records come back as Detection values."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DETECTIONS_HEADER:
            raise ValueError(f"bad detections header in {path}: {header}")
        out: list[Detection] = []
        for line, rec in enumerate(reader, start=2):
            if len(rec) != len(DETECTIONS_HEADER):
                raise ValueError(f"{path}:{line}: expected {len(DETECTIONS_HEADER)} fields")
            out.append(
                Detection(
                    time=parse_time(rec[0]),
                    row=float(rec[1]),
                    col=float(rec[2]),
                    lat=float(rec[3]),
                    lon=float(rec[4]),
                    score=float(rec[5]),
                )
            )
    return out
