"""Grid mapping, bilinear sampling, and the feature-map container format."""

from __future__ import annotations

import numpy as np
import pytest

from centertrack.grid import (
    FeatureMap,
    FeatureMapFormatError,
    GridSpec,
    bilinear,
    cell_of,
    grid_to_world,
    in_bounds,
    load_feature_map,
    save_feature_map,
    world_to_grid,
)


@pytest.fixture
def small_spec() -> GridSpec:
    return GridSpec.from_range(0.0, 4.0, 0.0, 4.0, 1.0)


class TestGridSpec:
    def test_from_range_cell_counts(self):
        spec = GridSpec.from_range(-51.2, 51.2, -51.2, 51.2, 0.8)
        assert spec.num_cells_x == 128
        assert spec.num_cells_y == 128

    def test_inconsistent_counts_rejected(self):
        with pytest.raises(ValueError):
            GridSpec(0.0, 4.0, 0.0, 4.0, 1.0, num_cells_x=5, num_cells_y=4)
        with pytest.raises(ValueError):
            GridSpec.from_range(0.0, 4.0, 0.0, 4.0, -1.0)
        with pytest.raises(ValueError):
            GridSpec.from_range(4.0, 0.0, 0.0, 4.0, 1.0)


class TestCoordinateMapping:
    def test_origin_and_one_cell(self, small_spec):
        assert world_to_grid(small_spec, 0.0, 0.0) == (0.0, 0.0)
        gx, gy = world_to_grid(small_spec, 1.0, 0.0)
        assert gx == 1.0 and gy == 0.0

    def test_reference_grid_center(self):
        spec = GridSpec.from_range(-51.2, 51.2, -51.2, 51.2, 0.8)
        assert world_to_grid(spec, 0.0, 0.0) == (64.0, 64.0)

    def test_round_trip(self, small_spec):
        rng = np.random.default_rng(3)
        specs = [small_spec, GridSpec.from_range(-51.2, 51.2, -20.0, 30.0, 0.25)]
        for spec in specs:
            for _ in range(300):
                x = float(rng.uniform(spec.x_min, spec.x_max))
                y = float(rng.uniform(spec.y_min, spec.y_max))
                gx, gy = world_to_grid(spec, x, y)
                rx, ry = grid_to_world(spec, gx, gy)
                assert abs(rx - x) < 1e-12
                assert abs(ry - y) < 1e-12

    def test_in_bounds(self, small_spec):
        assert in_bounds(small_spec, 0.0, 0.0)
        assert not in_bounds(small_spec, 4.0, 0.0)
        assert in_bounds(small_spec, 3.5, 3.5)
        assert not in_bounds(small_spec, -0.001, 2.0)

    def test_cell_of_floor_binning(self, small_spec):
        assert cell_of(small_spec, 0.0, 0.0) == (0, 0)
        assert cell_of(small_spec, 2.999, 1.0) == (2, 1)


class TestBilinear:
    def make_map(self, spec, values):
        return FeatureMap(spec, np.asarray(values, dtype=np.float64))

    def test_integer_coordinates_exact(self, small_spec):
        rng = np.random.default_rng(5)
        values = rng.normal(size=(4, 4, 3))
        fmap = self.make_map(small_spec, values)
        for ix in range(4):
            for iy in range(4):
                np.testing.assert_array_equal(bilinear(fmap, ix, iy), values[ix, iy])

    def test_constant_map(self, small_spec):
        fmap = self.make_map(small_spec, np.full((4, 4, 2), 7.25))
        rng = np.random.default_rng(7)
        for _ in range(50):
            out = bilinear(fmap, float(rng.uniform(0, 3)), float(rng.uniform(0, 3)))
            np.testing.assert_allclose(out, 7.25, atol=1e-12)

    def test_two_by_two_blend(self):
        spec = GridSpec.from_range(0.0, 2.0, 0.0, 2.0, 1.0)
        values = np.array([[[0.0], [0.0]], [[1.0], [1.0]]])
        fmap = FeatureMap(spec, values)
        assert bilinear(fmap, 0.5, 0.5)[0] == pytest.approx(0.5, abs=1e-15)

    def test_output_within_neighbor_range(self, small_spec):
        rng = np.random.default_rng(11)
        fmap = self.make_map(small_spec, rng.normal(size=(4, 4, 2)))
        for _ in range(200):
            gx = float(rng.uniform(0, 3))
            gy = float(rng.uniform(0, 3))
            out = bilinear(fmap, gx, gy)
            x0, y0 = int(gx), int(gy)
            neighborhood = fmap.values[x0 : x0 + 2, y0 : y0 + 2]
            lo = neighborhood.min(axis=(0, 1)) - 1e-12
            hi = neighborhood.max(axis=(0, 1)) + 1e-12
            assert np.all(out >= lo) and np.all(out <= hi)

    def test_linearity_in_map_values(self, small_spec):
        rng = np.random.default_rng(13)
        va = rng.normal(size=(4, 4, 2))
        vb = rng.normal(size=(4, 4, 2))
        alpha, beta = 0.3, -1.7
        fa = self.make_map(small_spec, va)
        fb = self.make_map(small_spec, vb)
        fab = self.make_map(small_spec, alpha * va + beta * vb)
        for _ in range(100):
            gx = float(rng.uniform(0, 3))
            gy = float(rng.uniform(0, 3))
            lhs = bilinear(fab, gx, gy)
            rhs = alpha * bilinear(fa, gx, gy) + beta * bilinear(fb, gx, gy)
            np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_out_of_range_clamps(self, small_spec):
        rng = np.random.default_rng(17)
        fmap = self.make_map(small_spec, rng.normal(size=(4, 4, 1)))
        np.testing.assert_array_equal(bilinear(fmap, -5.0, 1.0), bilinear(fmap, 0.0, 1.0))
        np.testing.assert_array_equal(bilinear(fmap, 9.0, 9.0), fmap.values[3, 3])

    def test_non_finite_coordinates_rejected(self, small_spec):
        fmap = self.make_map(small_spec, np.zeros((4, 4, 1)))
        with pytest.raises(ValueError):
            bilinear(fmap, float("nan"), 0.0)
        with pytest.raises(ValueError):
            bilinear(fmap, 0.0, float("inf"))


class TestFeatureMapType:
    def test_rejects_bad_shape_and_non_finite(self, small_spec):
        with pytest.raises(ValueError):
            FeatureMap(small_spec, np.zeros((3, 4, 1)))
        bad = np.zeros((4, 4, 1))
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            FeatureMap(small_spec, bad)

    def test_values_frozen(self, small_spec):
        fmap = FeatureMap(small_spec, np.zeros((4, 4, 1)))
        with pytest.raises(ValueError):
            fmap.values[0, 0, 0] = 1.0


class TestContainerFormat:
    def test_round_trip(self, small_spec, tmp_path):
        rng = np.random.default_rng(19)
        # float32-exact values round-trip bit for bit.
        values = rng.normal(size=(4, 4, 3)).astype(np.float32).astype(np.float64)
        fmap = FeatureMap(small_spec, values)
        path = tmp_path / "map.fm"
        save_feature_map(path, fmap, extra={"frame_index": 5})
        loaded, header = load_feature_map(path)
        assert loaded.spec == small_spec
        assert header["frame_index"] == 5
        np.testing.assert_array_equal(loaded.values, values)

    def test_float32_quantization_bounded(self, small_spec, tmp_path):
        rng = np.random.default_rng(23)
        values = rng.normal(size=(4, 4, 2))
        path = tmp_path / "map.fm"
        save_feature_map(path, FeatureMap(small_spec, values))
        loaded, _ = load_feature_map(path)
        np.testing.assert_allclose(loaded.values, values, rtol=1e-6, atol=1e-7)

    def test_truncated_payload_rejected(self, small_spec, tmp_path):
        path = tmp_path / "map.fm"
        save_feature_map(path, FeatureMap(small_spec, np.zeros((4, 4, 1))))
        data = path.read_bytes()
        path.write_bytes(data[:-4])
        with pytest.raises(FeatureMapFormatError):
            load_feature_map(path)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "map.fm"
        path.write_bytes(b"not json\n\x00\x00")
        with pytest.raises(FeatureMapFormatError):
            load_feature_map(path)

    def test_extra_key_collision_rejected(self, small_spec, tmp_path):
        fmap = FeatureMap(small_spec, np.zeros((4, 4, 1)))
        with pytest.raises(ValueError):
            save_feature_map(tmp_path / "m.fm", fmap, extra={"cell": 2.0})
