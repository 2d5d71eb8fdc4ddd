"""Synthetic cyclone scenarios: gridded fields plus exact ground-truth tracks.

Storms are great-circle walks with slowly wandering headings. Each step
carves a Gaussian pressure well into the MSLP field and adds a matching
vorticity bump to RV850, so the physics detector can recover the truth
without any training. Everything is driven by one seeded generator, so
a config reproduces its scenario bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from .geo import GridSpec, destination_point, geo_to_grid, grid_to_geo
from .grids import STORM_VARS, GridSeries
from .timeutil import is_synoptic, parse_time
from .tracker import STATE_FINISHED, Detection, Track

MSLP_BASE = 1015.0
RV_BUMP = 1e-4

# seeding box, in cells: south of 30N with margin to walk west
_SEED_ROWS = (180.0, 248.0)
_SEED_COLS = (200.0, 840.0)
_SEED_HEADING = (250.0, 300.0)
_MIN_SEPARATION_CELLS = 60.0
_MAX_SEED_ATTEMPTS = 200


@dataclass(frozen=True)
class ScenarioConfig:
    n_storms: int = 3
    steps: int = 40
    start: str = "1998-08-01T00:00:00Z"
    speed_kmh: float = 15.0
    turn_rate_deg: float = 6.0
    well_depth: float = 12.0
    well_radius_cells: float = 4.0
    noise_std: float = 0.0
    dropout_prob: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_storms < 0:
            raise ValueError("n_storms must be non-negative")
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if not is_synoptic(self.start_time):
            raise ValueError(f"start must be a synoptic instant, got {self.start}")
        if self.speed_kmh <= 0:
            raise ValueError("speed_kmh must be positive")
        if self.speed_kmh * 6.0 > 400.0:
            # keep generated motion inside the tracker's displacement gate
            raise ValueError("speed_kmh * 6 h must stay within 400 km")
        if self.turn_rate_deg < 0:
            raise ValueError("turn_rate_deg must be non-negative")
        if self.well_depth <= 0 or self.well_radius_cells <= 0:
            raise ValueError("well_depth and well_radius_cells must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must lie in [0, 1]")

    @property
    def start_time(self) -> datetime:
        return parse_time(self.start)


def _seed_positions(rng: np.random.Generator, n: int) -> list[tuple[float, float, float]]:
    seeds: list[tuple[float, float, float]] = []
    attempts = 0
    while len(seeds) < n:
        if attempts >= _MAX_SEED_ATTEMPTS:
            raise ValueError(f"could not place {n} storms {_MIN_SEPARATION_CELLS} cells apart")
        attempts += 1
        row = float(rng.uniform(*_SEED_ROWS))
        col = float(rng.uniform(*_SEED_COLS))
        heading = float(rng.uniform(*_SEED_HEADING))
        if all(max(abs(row - r), abs(col - c)) >= _MIN_SEPARATION_CELLS for r, c, _ in seeds):
            seeds.append((row, col, heading))
    return seeds


def _walk(
    rng: np.random.Generator, config: ScenarioConfig, seed: tuple[float, float, float],
    spec: GridSpec,
) -> list[tuple[float, float]]:
    """Cell-space centers until the storm leaves the domain."""
    row, col, heading = seed
    step_km = config.speed_kmh * 6.0
    turns = rng.normal(0.0, config.turn_rate_deg, size=config.steps - 1)
    cells = [(row, col)]
    point = grid_to_geo(row, col, spec)
    for i in range(config.steps - 1):
        point = destination_point(point, heading, step_km)
        heading = (heading + float(turns[i])) % 360.0
        r, c = geo_to_grid(point, spec)
        if not (0.0 <= r <= spec.rows - 1 and 0.0 <= c <= spec.cols - 1):
            break
        cells.append((r, c))
    return cells


def _carve(field: np.ndarray, row: float, col: float, amplitude: float, sigma: float) -> None:
    # only touch a 4-sigma window; the tails are numerically irrelevant
    reach = 4.0 * sigma
    r0, r1 = max(0, int(np.floor(row - reach))), min(field.shape[0], int(np.ceil(row + reach)) + 1)
    c0, c1 = max(0, int(np.floor(col - reach))), min(field.shape[1], int(np.ceil(col + reach)) + 1)
    rr = np.arange(r0, r1, dtype=np.float64)[:, None]
    cc = np.arange(c0, c1, dtype=np.float64)[None, :]
    d2 = (rr - row) ** 2 + (cc - col) ** 2
    field[r0:r1, c0:c1] += amplitude * np.exp(-d2 / (2.0 * sigma * sigma))


def generate(config: ScenarioConfig, spec: GridSpec = GridSpec()) -> tuple[GridSeries, list[Track]]:
    """Build the field series and the exact truth tracks for one scenario.

    Truth tracks always record the full walk; dropout only suppresses
    the field signature, which is what a missed detection looks like.
    Storms that wander off the domain are truncated at the last inside
    point.
    """
    rng = np.random.default_rng(config.seed)
    stamps = [config.start_time + timedelta(hours=6 * i) for i in range(config.steps)]

    walks = []
    for seed in _seed_positions(rng, config.n_storms):
        walks.append(_walk(rng, config, seed, spec))
    dropped = [
        rng.uniform(size=len(walk)) < config.dropout_prob if config.dropout_prob > 0
        else np.zeros(len(walk), dtype=bool)
        for walk in walks
    ]

    values = np.zeros((config.steps, 2, spec.rows, spec.cols), dtype=np.float64)
    values[:, STORM_VARS.index("mslp")] = MSLP_BASE
    for storm, walk in enumerate(walks):
        for t, (row, col) in enumerate(walk):
            if dropped[storm][t]:
                continue
            _carve(values[t, STORM_VARS.index("mslp")], row, col, -config.well_depth,
                   config.well_radius_cells)
            _carve(values[t, STORM_VARS.index("rv850")], row, col, RV_BUMP,
                   config.well_radius_cells)
    if config.noise_std > 0:
        scale = {"rv850": RV_BUMP, "mslp": config.well_depth}
        for t in range(config.steps):
            for v, name in enumerate(STORM_VARS):
                values[t, v] += rng.normal(
                    0.0, config.noise_std * scale[name], size=(spec.rows, spec.cols)
                )

    series = GridSeries(
        spec=spec,
        variables=STORM_VARS,
        timestamps=stamps,
        values=values.astype(np.float32),
    )
    truth = [
        Track(
            track_id=storm + 1,
            points=[
                Detection.from_cell(stamps[t], row, col, 1.0, spec)
                for t, (row, col) in enumerate(walk)
            ],
            state=STATE_FINISHED,
        )
        for storm, walk in enumerate(walks)
    ]
    return series, truth
