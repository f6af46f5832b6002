"""Per-channel min-max uniform quantization with per-group adaptive depths.

The forward map for a channel with values in [v_min, v_max] and depth Q is

    q(x) = round((x - v_min) * (L - 1) / (v_max - v_min)),   L = 2**Q

with half-away-from-zero rounding, so indices land in [0, L-1] and the
endpoints are fixed points. Reconstruction places index i at
v_min + i * (v_max - v_min) / (L - 1); the step is derived from the stored
bounds, never transmitted. Depths differ per attribute group (geometry is
the most error-sensitive, SH AC the least), which is how the codec's rate
presets work.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import AttributeGroup, GaussianCloud

MIN_DEPTH = 1
MAX_DEPTH = 24


@dataclass(frozen=True)
class QuantGrid:
    """Reconstruction grid for one channel: float32 bounds plus a depth."""

    v_min: float
    v_max: float
    depth_q: int

    def __post_init__(self):
        if not MIN_DEPTH <= self.depth_q <= MAX_DEPTH:
            raise ValidationError(
                f"quantization depth {self.depth_q} outside [{MIN_DEPTH}, {MAX_DEPTH}]"
            )
        if not (np.isfinite(self.v_min) and np.isfinite(self.v_max)):
            raise ValidationError("grid bounds must be finite")
        if self.v_min > self.v_max:
            raise ValidationError(f"grid bounds inverted: {self.v_min} > {self.v_max}")

    @property
    def levels(self) -> int:
        return 1 << self.depth_q

    @property
    def step(self) -> float:
        return (float(self.v_max) - float(self.v_min)) / (self.levels - 1)


@dataclass(frozen=True)
class RatePreset:
    """Named bundle of per-group quantization depths."""

    name: str
    depths: dict  # AttributeGroup -> depth_q

    def depth(self, group: AttributeGroup) -> int:
        return self.depths[group]

    def with_overrides(self, overrides: dict) -> "RatePreset":
        if not overrides:
            return self
        merged = dict(self.depths)
        merged.update(overrides)
        return RatePreset(name="custom", depths=merged)


def _preset(name, geometry, rotation, scaling, opacity, shdc, shac):
    return RatePreset(
        name=name,
        depths={
            AttributeGroup.GEOMETRY: geometry,
            AttributeGroup.ROTATION: rotation,
            AttributeGroup.SCALING: scaling,
            AttributeGroup.OPACITY: opacity,
            AttributeGroup.SHDC: shdc,
            AttributeGroup.SHAC: shac,
        },
    )


# Large/medium/small rate configurations. Ranged published settings are
# pinned to fixed defaults (geometry S -> 16; SH AC L -> 4, M -> 4, S -> 3);
# individual groups can be overridden per encode.
PRESETS = {
    "L": _preset("L", geometry=17, rotation=8, scaling=8, opacity=8, shdc=8, shac=4),
    "M": _preset("M", geometry=16, rotation=8, scaling=8, opacity=8, shdc=8, shac=4),
    "S": _preset("S", geometry=16, rotation=7, scaling=7, opacity=7, shdc=8, shac=3),
}


def grid_from_values(values: np.ndarray, depth_q: int) -> QuantGrid:
    """Grid capturing the channel's true min/max as float32, at the given depth."""
    values = np.asarray(values)
    if values.size == 0:
        return QuantGrid(0.0, 0.0, depth_q)
    if not np.all(np.isfinite(values)):
        raise ValidationError("cannot quantize non-finite values")
    v_min = float(np.float32(values.min()))
    v_max = float(np.float32(values.max()))
    return QuantGrid(v_min, v_max, depth_q)


def apply_grid(values: np.ndarray, grid: QuantGrid) -> np.ndarray:
    """Quantization indices of ``values`` under an existing grid.

    Rounding is half-away-from-zero; the scaled coordinate is non-negative,
    so floor(t + 0.5) implements it exactly. Out-of-range inputs clamp to
    the boundary levels.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size and not np.all(np.isfinite(values)):
        raise ValidationError("cannot quantize non-finite values")
    span = float(grid.v_max) - float(grid.v_min)
    if span == 0.0:
        return np.zeros(values.shape, dtype=np.int64)
    t = (values - float(grid.v_min)) * ((grid.levels - 1) / span)
    idx = np.floor(t + 0.5).astype(np.int64)
    return np.clip(idx, 0, grid.levels - 1)


def quantize_channel(values: np.ndarray, depth_q: int) -> tuple[np.ndarray, QuantGrid]:
    """Quantize one channel at depth Q; returns (indices, grid).

    The grid spans the data's own min/max, so q(v_min)=0 and q(v_max)=L-1.
    A constant channel degenerates to all-zero indices with step 0.
    """
    values = np.asarray(values)
    if values.size == 0:
        raise ValidationError("cannot quantize an empty channel")
    grid = grid_from_values(values, depth_q)
    return apply_grid(values, grid), grid


def dequantize_channel(indices: np.ndarray, grid: QuantGrid) -> np.ndarray:
    """Reconstruct float32 values: v_min + index * step (v_min for degenerate grids)."""
    indices = np.asarray(indices)
    if indices.size and (indices.min() < 0 or indices.max() >= grid.levels):
        raise IndexError(
            f"quantization index out of range for L={grid.levels}"
        )
    out = float(grid.v_min) + indices.astype(np.float64) * grid.step
    return out.astype(np.float32)


def sensitivity_sweep(
    cloud: GaussianCloud, group: AttributeGroup, depths: list[int]
) -> list[tuple[float, int]]:
    """Attribute-space quantization error per depth for one group.

    For each depth, every channel in the group is quantized and reconstructed;
    the MSE over all entries is normalized by the group's mean absolute value.
    Returns [(normalized_mse, depth), ...] in the order given. This measures
    error in the stored-attribute domain only, not rendering impact.
    """
    if not depths:
        raise ValidationError("sensitivity_sweep needs at least one depth")
    arr = cloud.group(group)
    if arr.size == 0:
        raise ValidationError("sensitivity_sweep needs a non-empty cloud")
    x = arr.astype(np.float64)
    mean_abs = float(np.abs(x).mean())
    results = []
    for depth in depths:
        err = 0.0
        for c in range(group.channel_count):
            idx, grid = quantize_channel(arr[:, c], depth)
            rec = dequantize_channel(idx, grid).astype(np.float64)
            err += float(((x[:, c] - rec) ** 2).sum())
        mse = err / x.size
        results.append((mse / mean_abs if mean_abs > 0 else 0.0, depth))
    return results
