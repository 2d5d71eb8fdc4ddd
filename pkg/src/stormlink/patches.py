"""Patch dataset construction: tiling, labelling, sampling and augmentation.

A 280x880 map splits into 7x22 = 154 non-overlapping 40x40 tiles. A tile
is a cyclone patch when it contains a snapped best-track center; training
negatives are the three nearest neighbouring tiles per cyclone patch plus
one random background tile, giving roughly one positive per four negatives.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path

import numpy as np

from .besttrack import BestTrackPoint
from .geo import GridSpec, snap_to_grid
from .timeutil import format_time, parse_time

PATCH_SIZE = 40

KIND_BACKGROUND = "background"
KIND_CYCLONE = "cyclone"
KIND_NEAREST = "nearest"
KIND_RANDOM = "random"
KINDS = (KIND_BACKGROUND, KIND_CYCLONE, KIND_NEAREST, KIND_RANDOM)


@dataclass
class PatchSample:
    """One 40x40 two-channel tile with its label and provenance-free metadata."""

    pixels: np.ndarray
    timestamp: datetime
    patch_row: int
    patch_col: int
    label: int = 0
    center: tuple[int, int] | None = None
    kind: str = KIND_BACKGROUND

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3 or self.pixels.shape[1] != self.pixels.shape[2]:
            raise ValueError(f"pixels must be (channels, s, s), got {self.pixels.shape}")
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")
        if self.label == 1 and self.center is None:
            raise ValueError("positive samples need an in-patch center")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")


def patchify(
    frame: np.ndarray, timestamp: datetime, patch_size: int = PATCH_SIZE
) -> list[PatchSample]:
    """Split one (channels, H, W) frame into row-major tiles; H and W must divide evenly."""
    _, h, w = frame.shape
    if h % patch_size or w % patch_size:
        raise ValueError(f"{h}x{w} field not divisible into {patch_size}-cell tiles")
    out: list[PatchSample] = []
    for pi in range(h // patch_size):
        for pj in range(w // patch_size):
            tile = frame[
                :, pi * patch_size : (pi + 1) * patch_size, pj * patch_size : (pj + 1) * patch_size
            ]
            out.append(PatchSample(np.array(tile), timestamp, pi, pj))
    return out


def snap_centers(
    points: list[BestTrackPoint], spec: GridSpec = GridSpec()
) -> tuple[list[tuple[int, int]], int]:
    """Best-track points to in-domain grid cells; returns (cells, skipped count)."""
    cells: list[tuple[int, int]] = []
    skipped = 0
    for p in points:
        row, col = snap_to_grid(p.point, spec)
        if 0 <= row < spec.rows and 0 <= col < spec.cols:
            cells.append((row, col))
        else:
            skipped += 1
    return cells, skipped


def label_patches(
    patches: list[PatchSample],
    centers: list[tuple[int, int]],
    patch_size: int = PATCH_SIZE,
) -> list[PatchSample]:
    """Mark tiles containing observed centers; center recorded in-patch.

    When several centers fall inside one tile the lexicographically
    smallest in-patch (row, col) is kept as the regression target.
    """
    by_tile: dict[tuple[int, int], tuple[int, int]] = {}
    for row, col in centers:
        tile = (row // patch_size, col // patch_size)
        local = (row % patch_size, col % patch_size)
        if tile not in by_tile or local < by_tile[tile]:
            by_tile[tile] = local
    out: list[PatchSample] = []
    for s in patches:
        hit = by_tile.get((s.patch_row, s.patch_col))
        if hit is None:
            out.append(replace(s, label=0, center=None, kind=KIND_BACKGROUND))
        else:
            out.append(replace(s, label=1, center=hit, kind=KIND_CYCLONE))
    return out


def _tile_center(tile: tuple[int, int], patch_size: int) -> tuple[float, float]:
    half = (patch_size - 1) / 2.0 + 0.5  # 19.5 for 40-cell tiles
    return tile[0] * patch_size + half, tile[1] * patch_size + half


def _nearest_tiles(
    cyclone: PatchSample,
    occupied: set[tuple[int, int]],
    taken: set[tuple[int, int]],
    n_tiles: tuple[int, int],
    patch_size: int,
    want: int = 3,
) -> list[tuple[int, int]]:
    """Up to `want` free tiles nearest the cyclone center, 8-neighbourhood first.

    Tie-break: prefer diagonal neighbours, then lexicographic tile order.
    Edge and crowding deficits back-fill from wider rings.
    """
    assert cyclone.center is not None
    gr = cyclone.patch_row * patch_size + cyclone.center[0]
    gc = cyclone.patch_col * patch_size + cyclone.center[1]
    picked: list[tuple[int, int]] = []
    ring = 1
    max_ring = max(n_tiles)
    while len(picked) < want and ring <= max_ring:
        candidates = []
        for di in range(-ring, ring + 1):
            for dj in range(-ring, ring + 1):
                if max(abs(di), abs(dj)) != ring:
                    continue
                tile = (cyclone.patch_row + di, cyclone.patch_col + dj)
                if not (0 <= tile[0] < n_tiles[0] and 0 <= tile[1] < n_tiles[1]):
                    continue
                if tile in occupied or tile in taken or tile in picked:
                    continue
                tr, tc = _tile_center(tile, patch_size)
                dist = float(np.hypot(tr - gr, tc - gc))
                diagonal = abs(di) == abs(dj)
                candidates.append((dist, 0 if diagonal else 1, tile))
        candidates.sort()
        picked.extend(tile for _, _, tile in candidates[: want - len(picked)])
        ring += 1
    return picked


def select_training_patches(
    labeled_maps: list[list[PatchSample]], seed: int
) -> list[PatchSample]:
    """Pick training samples from labelled maps: positives plus 1:4 negatives.

    Per cyclone patch: the patch itself, its three nearest free tiles, and
    one random free background tile. No tile enters a map's negative pool twice.
    """
    rng = np.random.default_rng(seed)
    out: list[PatchSample] = []
    for tiles in labeled_maps:
        if not tiles:
            continue
        n_tiles = (max(s.patch_row for s in tiles) + 1, max(s.patch_col for s in tiles) + 1)
        patch_size = tiles[0].pixels.shape[1]
        by_tile = {(s.patch_row, s.patch_col): s for s in tiles}
        cyclones = [s for s in tiles if s.label == 1]
        occupied = {(s.patch_row, s.patch_col) for s in cyclones}
        taken: set[tuple[int, int]] = set()
        nearest_per_cyclone: list[list[tuple[int, int]]] = []
        for cyc in cyclones:
            nearest = _nearest_tiles(cyc, occupied, taken, n_tiles, patch_size)
            taken.update(nearest)
            nearest_per_cyclone.append(nearest)
        for cyc, nearest in zip(cyclones, nearest_per_cyclone):
            out.append(cyc)
            out.extend(replace(by_tile[t], kind=KIND_NEAREST) for t in nearest)
        pool = sorted(
            t for t in by_tile if t not in occupied and t not in taken
        )
        for _ in cyclones:
            if not pool:
                break
            idx = int(rng.integers(len(pool)))
            tile = pool.pop(idx)
            out.append(replace(by_tile[tile], kind=KIND_RANDOM))
    return out


def augment_positive(sample: PatchSample) -> list[PatchSample]:
    """Three label-preserving variants: 180-degree rotation, horizontal and vertical flips."""
    if sample.label != 1 or sample.center is None:
        raise ValueError("augmentation applies to positive samples only")
    s = sample.pixels.shape[1]
    r, c = sample.center
    rot = replace(
        sample, pixels=np.ascontiguousarray(sample.pixels[:, ::-1, ::-1]), center=(s - 1 - r, s - 1 - c)
    )
    hflip = replace(
        sample, pixels=np.ascontiguousarray(sample.pixels[:, :, ::-1]), center=(r, s - 1 - c)
    )
    vflip = replace(
        sample, pixels=np.ascontiguousarray(sample.pixels[:, ::-1, :]), center=(s - 1 - r, c)
    )
    return [rot, hflip, vflip]


def split_dataset(samples: list[PatchSample]) -> dict[str, list[PatchSample]]:
    """Chronological split by map timestamp.

    August 1980-2019 is held out for the headline test set; the remaining
    months give train (1980-2009) and validation (2010-2019); everything
    in 2020-2023 is the recent test set. Years outside the studied range
    fall into train (before 1980) or test_recent (after 2023).
    """
    splits: dict[str, list[PatchSample]] = {
        "train": [],
        "val": [],
        "test_august": [],
        "test_recent": [],
    }
    for s in samples:
        year, month = s.timestamp.year, s.timestamp.month
        if year > 2019:
            splits["test_recent"].append(s)
        elif month == 8 and year >= 1980:
            splits["test_august"].append(s)
        elif year >= 2010:
            splits["val"].append(s)
        else:
            splits["train"].append(s)
    return splits


DATASET_MANIFEST = "manifest.txt"
DATASET_CSV = "samples.csv"
DATASET_BLOB = "pixels.f32"


def save_dataset(samples: list[PatchSample], path: str | Path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if samples:
        channels, size = samples[0].pixels.shape[0], samples[0].pixels.shape[1]
    else:
        channels, size = 2, PATCH_SIZE
    (out / DATASET_MANIFEST).write_text(
        "\n".join(
            [
                "format: patch-dataset-v1",
                f"count: {len(samples)}",
                f"channels: {channels}",
                f"patch_size: {size}",
                "dtype: f32le",
            ]
        )
        + "\n"
    )
    with open(out / DATASET_CSV, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iso_time", "patch_row", "patch_col", "label", "center_row", "center_col", "kind"])
        for s in samples:
            cr, cc = ("", "") if s.center is None else s.center
            writer.writerow(
                [format_time(s.timestamp), s.patch_row, s.patch_col, s.label, cr, cc, s.kind]
            )
    blob = np.stack([s.pixels for s in samples]).astype("<f4") if samples else np.zeros(0, "<f4")
    (out / DATASET_BLOB).write_bytes(np.ascontiguousarray(blob).tobytes())
    return out


def load_dataset(path: str | Path) -> list[PatchSample]:
    root = Path(path)
    header = dict(
        line.split(": ", 1)
        for line in (root / DATASET_MANIFEST).read_text().splitlines()
        if line.strip()
    )
    if header.get("format") != "patch-dataset-v1":
        raise ValueError(f"unsupported dataset format: {header.get('format')}")
    count = int(header["count"])
    channels, size = int(header["channels"]), int(header["patch_size"])
    raw = np.frombuffer((root / DATASET_BLOB).read_bytes(), dtype="<f4")
    pixels = raw.reshape(count, channels, size, size)
    samples: list[PatchSample] = []
    with open(root / DATASET_CSV, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for i, row in enumerate(reader):
            iso, pr, pc, label, cr, cc, kind = row
            samples.append(
                PatchSample(
                    pixels=np.array(pixels[i]),
                    timestamp=parse_time(iso),
                    patch_row=int(pr),
                    patch_col=int(pc),
                    label=int(label),
                    center=(int(cr), int(cc)) if cr else None,
                    kind=kind,
                )
            )
    if len(samples) != count:
        raise ValueError(f"dataset lists {count} samples, found {len(samples)}")
    return samples
