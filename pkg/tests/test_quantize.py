import numpy as np
import pytest

from splatcodec import (
    AttributeGroup,
    PRESETS,
    QuantGrid,
    ValidationError,
    dequantize_channel,
    quantize_channel,
    sensitivity_sweep,
    synthetic_cloud,
)


class TestQuantizeChannel:
    def test_endpoints_and_midpoint(self):
        idx, grid = quantize_channel(np.array([0.0, 0.5, 1.0], dtype=np.float32), 8)
        # 0.5 scales to 127.5: half-away-from-zero rounds up
        assert list(idx) == [0, 128, 255]
        assert (grid.v_min, grid.v_max, grid.depth_q) == (0.0, 1.0, 8)

    def test_half_away_from_zero_everywhere(self):
        # index boundary at every t + 0.5 must round up, unlike bankers rounding
        values = np.array([0.0, 126.5, 127.5, 255.0], dtype=np.float32)
        idx, _ = quantize_channel(values, 8)
        assert list(idx) == [0, 127, 128, 255]

    def test_constant_channel(self):
        idx, grid = quantize_channel(np.full(10, 3.25, dtype=np.float32), 12)
        assert np.all(idx == 0)
        assert grid.step == 0.0
        assert np.all(dequantize_channel(idx, grid) == np.float32(3.25))

    def test_error_bound_uniform(self, rng):
        x = rng.random(100_000).astype(np.float32)
        idx, grid = quantize_channel(x, 8)
        err = np.abs(x.astype(np.float64) - dequantize_channel(idx, grid).astype(np.float64))
        assert err.max() <= grid.step / 2 + np.spacing(np.float32(1.0))

    def test_monotone(self, rng):
        x = np.sort(rng.normal(size=10_000).astype(np.float32))
        idx, _ = quantize_channel(x, 6)
        assert np.all(np.diff(idx) >= 0)

    def test_endpoints_are_fixed_points(self, rng):
        x = rng.normal(0, 5, 1_000).astype(np.float32)
        idx, grid = quantize_channel(x, 10)
        assert idx[x.argmin()] == 0
        assert idx[x.argmax()] == grid.levels - 1

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            quantize_channel(np.array([0.0, np.inf]), 8)

    def test_depth_bounds(self):
        with pytest.raises(ValidationError):
            QuantGrid(0.0, 1.0, 0)
        with pytest.raises(ValidationError):
            QuantGrid(0.0, 1.0, 25)


class TestDequantizeChannel:
    def test_endpoint_reconstruction(self, rng):
        x = rng.normal(0, 3, 500).astype(np.float32)
        idx, grid = quantize_channel(x, 8)
        rec = dequantize_channel(np.array([0, grid.levels - 1]), grid)
        assert rec[0] == np.float32(grid.v_min)
        assert rec[1] == np.float32(grid.v_max)

    def test_roundtrip_identity_all_levels(self):
        grid = QuantGrid(-2.0, 3.0, 8)
        levels = np.arange(256)
        rec = dequantize_channel(levels, grid)
        from splatcodec import apply_grid
        assert np.array_equal(apply_grid(rec, grid), levels)

    def test_index_out_of_range(self):
        grid = QuantGrid(0.0, 1.0, 4)
        with pytest.raises(IndexError):
            dequantize_channel(np.array([16]), grid)


class TestSensitivitySweep:
    def test_strictly_decreasing(self, rng):
        cloud = synthetic_cloud(5_000, seed=1)
        sweep = sensitivity_sweep(cloud, AttributeGroup.SCALING, [2, 4, 8])
        mses = [m for m, _ in sweep]
        assert mses[0] > mses[1] > mses[2]

    def test_high_depth_near_zero(self, rng):
        cloud = synthetic_cloud(2_000, seed=2)
        (mse, depth), = sensitivity_sweep(cloud, AttributeGroup.OPACITY, [20])
        assert depth == 20
        assert mse < 1e-9

    def test_constant_group_zero(self):
        n = 100
        cloud = synthetic_cloud(n, seed=3)
        from splatcodec import GaussianCloud
        cloud = GaussianCloud(
            geometry=cloud.geometry, rotation=cloud.rotation, scaling=cloud.scaling,
            opacity=np.full((n, 1), 2.5, dtype=np.float32), sh_dc=cloud.sh_dc,
            sh_ac=cloud.sh_ac,
        )
        for mse, _ in sensitivity_sweep(cloud, AttributeGroup.OPACITY, [2, 4, 8]):
            assert mse == 0.0

    def test_monotone_non_increasing(self):
        cloud = synthetic_cloud(3_000, seed=4)
        sweep = sensitivity_sweep(cloud, AttributeGroup.SHAC, [2, 3, 4, 6, 8, 10])
        mses = [m for m, _ in sweep]
        assert all(a >= b - 1e-15 for a, b in zip(mses, mses[1:]))

    def test_empty_depths(self):
        with pytest.raises(ValidationError):
            sensitivity_sweep(synthetic_cloud(10, seed=0), AttributeGroup.SHAC, [])


class TestPresets:
    def test_published_depth_table(self):
        G = AttributeGroup
        expected = {
            "L": {G.GEOMETRY: 17, G.ROTATION: 8, G.SCALING: 8, G.OPACITY: 8, G.SHDC: 8, G.SHAC: 4},
            "M": {G.GEOMETRY: 16, G.ROTATION: 8, G.SCALING: 8, G.OPACITY: 8, G.SHDC: 8, G.SHAC: 4},
            "S": {G.GEOMETRY: 16, G.ROTATION: 7, G.SCALING: 7, G.OPACITY: 7, G.SHDC: 8, G.SHAC: 3},
        }
        for name, depths in expected.items():
            assert PRESETS[name].depths == depths

    def test_overrides_produce_custom(self):
        p = PRESETS["M"].with_overrides({AttributeGroup.SHAC: 5})
        assert p.name == "custom"
        assert p.depth(AttributeGroup.SHAC) == 5
        assert p.depth(AttributeGroup.ROTATION) == 8
