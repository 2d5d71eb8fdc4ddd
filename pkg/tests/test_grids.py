from __future__ import annotations

import numpy as np
import pytest

from stormlink.geo import GridSpec
from stormlink.grids import (
    GridSeries,
    read_grid_dir,
    read_land_mask,
    write_grid_dir,
    write_land_mask,
)
from stormlink.timeutil import parse_time


def small_series(n_steps=3, rows=8, cols=12, seed=0):
    spec = GridSpec(lat0=70.0, lon0=100.0, cell_deg=0.25, rows=rows, cols=cols)
    rng = np.random.default_rng(seed)
    stamps = [parse_time(f"1995-08-01T{h:02d}:00:00Z") for h in (0, 6, 12, 18)][:n_steps]
    if n_steps > 4:
        raise ValueError("helper supports up to 4 steps")
    values = rng.normal(size=(n_steps, 2, rows, cols)).astype(np.float32)
    return GridSeries(spec=spec, variables=("rv850", "mslp"), timestamps=stamps, values=values)


class TestGridSeries:
    def test_shape_mismatch_rejected(self):
        spec = GridSpec(rows=8, cols=12)
        with pytest.raises(ValueError, match="shape"):
            GridSeries(spec, ("rv850", "mslp"), [parse_time("1995-08-01T00:00:00Z")],
                       np.zeros((1, 2, 8, 13), np.float32))

    def test_dtype_enforced(self):
        spec = GridSpec(rows=8, cols=12)
        with pytest.raises(ValueError, match="float32"):
            GridSeries(spec, ("rv850", "mslp"), [parse_time("1995-08-01T00:00:00Z")],
                       np.zeros((1, 2, 8, 12), np.float64))

    def test_non_synoptic_hour_rejected(self):
        spec = GridSpec(rows=8, cols=12)
        with pytest.raises(ValueError, match="synoptic"):
            GridSeries(spec, ("rv850", "mslp"), [parse_time("1995-08-01T03:00:00Z")],
                       np.zeros((1, 2, 8, 12), np.float32))

    def test_timestamps_strictly_increasing(self):
        spec = GridSpec(rows=8, cols=12)
        t = parse_time("1995-08-01T00:00:00Z")
        with pytest.raises(ValueError, match="increasing"):
            GridSeries(spec, ("rv850", "mslp"), [t, t], np.zeros((2, 2, 8, 12), np.float32))

    def test_require_storm_vars(self):
        s = small_series()
        s.require_storm_vars()
        flipped = GridSeries(s.spec, ("mslp", "rv850"), s.timestamps, s.values)
        with pytest.raises(ValueError):
            flipped.require_storm_vars()


class TestGridDir:
    def test_round_trip_values_and_metadata(self, tmp_path):
        series = small_series()
        write_grid_dir(series, tmp_path / "g")
        back = read_grid_dir(tmp_path / "g")
        assert back.spec == series.spec
        assert back.variables == series.variables
        assert back.timestamps == series.timestamps
        np.testing.assert_array_equal(back.values, series.values)

    def test_rewrite_is_byte_identical(self, tmp_path):
        series = small_series()
        write_grid_dir(series, tmp_path / "a")
        write_grid_dir(series, tmp_path / "b")
        files_a = sorted(p.name for p in (tmp_path / "a").iterdir())
        files_b = sorted(p.name for p in (tmp_path / "b").iterdir())
        assert files_a == files_b
        for name in files_a:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_grid_dir(tmp_path)

    def test_truncated_blob_detected(self, tmp_path):
        series = small_series()
        out = write_grid_dir(series, tmp_path / "g")
        blob = next(p for p in out.iterdir() if p.suffix == ".f32")
        blob.write_bytes(blob.read_bytes()[:-4])
        with pytest.raises(ValueError, match="bytes"):
            read_grid_dir(out)

    def test_timestep_count_mismatch_detected(self, tmp_path):
        series = small_series()
        out = write_grid_dir(series, tmp_path / "g")
        manifest = out / "manifest.txt"
        text = manifest.read_text().replace("timesteps: 3", "timesteps: 2")
        manifest.write_text(text)
        with pytest.raises(ValueError, match="timesteps"):
            read_grid_dir(out)


class TestLandMask:
    def test_round_trip(self, tmp_path):
        spec = GridSpec(rows=8, cols=12)
        mask = np.zeros((8, 12), bool)
        mask[2:4, 3:7] = True
        write_land_mask(mask, spec, tmp_path / "land")
        back, back_spec = read_land_mask(tmp_path / "land")
        assert back_spec == spec
        np.testing.assert_array_equal(back, mask)

    def test_wrong_variable_rejected(self, tmp_path):
        write_grid_dir(small_series(), tmp_path / "g")
        with pytest.raises(ValueError, match="land"):
            read_land_mask(tmp_path / "g")
