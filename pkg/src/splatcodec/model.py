"""In-memory 3DGS model and binary PLY serialization.

A Gaussian splat model is a flat table of N primitives whose scalar columns
fall into six attribute groups: geometry (xyz), rotation (quaternion, stored
unnormalized), scaling (log-scales), opacity (pre-sigmoid logit), SH DC color
(3 channels) and SH AC color (45 channels, degree 3). All values are kept in
the stored (pre-activation) domain; nothing here applies sigmoid/exp.

The on-disk format is the de-facto 3DGS PLY layout: binary little-endian,
one ``vertex`` element with 62 float32 properties in the order

    x y z nx ny nz f_dc_0..2 f_rest_0..44 opacity scale_0..2 rot_0..3

Normals are read and discarded on load, written as zeros on save.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import FormatError, UnsupportedFormatError, ValidationError


class AttributeGroup(Enum):
    """The six attribute groups, with their per-Gaussian channel counts."""

    GEOMETRY = ("geometry", 3)
    ROTATION = ("rotation", 4)
    SCALING = ("scaling", 3)
    OPACITY = ("opacity", 1)
    SHDC = ("sh_dc", 3)
    SHAC = ("sh_ac", 45)

    @property
    def field(self) -> str:
        return self.value[0]

    @property
    def channel_count(self) -> int:
        return self.value[1]


# 59 coded scalar channels per Gaussian (normals excluded)
TOTAL_CHANNELS = sum(g.channel_count for g in AttributeGroup)

# PLY property names in canonical order
_PLY_PROPERTIES = (
    ["x", "y", "z", "nx", "ny", "nz"]
    + [f"f_dc_{i}" for i in range(3)]
    + [f"f_rest_{i}" for i in range(45)]
    + ["opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)

_FLOAT_TYPES = {"float", "float32"}


def _as_f32(a, name: str, channels: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.float32)
    if a.ndim == 1 and channels == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2 or a.shape[1] != channels:
        raise ValidationError(f"{name} must have shape (N, {channels}), got {a.shape}")
    return a


@dataclass(frozen=True)
class GaussianCloud:
    """One 3DGS model: six float32 attribute arrays sharing a leading dimension.

    Immutable by convention after construction; pipeline stages that reorder
    or filter Gaussians build a new instance.
    """

    geometry: np.ndarray  # (N, 3)
    rotation: np.ndarray  # (N, 4)
    scaling: np.ndarray  # (N, 3)
    opacity: np.ndarray  # (N, 1)
    sh_dc: np.ndarray  # (N, 3)
    sh_ac: np.ndarray  # (N, 45)

    def __post_init__(self):
        for group in AttributeGroup:
            arr = _as_f32(getattr(self, group.field), group.field, group.channel_count)
            object.__setattr__(self, group.field, arr)
        n = self.geometry.shape[0]
        for group in AttributeGroup:
            if getattr(self, group.field).shape[0] != n:
                raise ValidationError(
                    f"attribute arrays disagree on N: {group.field} has "
                    f"{getattr(self, group.field).shape[0]} rows, geometry has {n}"
                )

    @property
    def count(self) -> int:
        return self.geometry.shape[0]

    def group(self, group: AttributeGroup) -> np.ndarray:
        """The (N, channel_count) array backing one attribute group."""
        return getattr(self, group.field)

    def validate_finite(self) -> None:
        """Raise ValidationError naming the first non-finite row, if any."""
        for group in AttributeGroup:
            arr = self.group(group)
            bad = ~np.isfinite(arr)
            if bad.any():
                row = int(np.nonzero(bad.any(axis=1))[0][0])
                raise ValidationError(
                    f"non-finite value in {group.field} at row {row}"
                )

    def permuted(self, order: np.ndarray) -> "GaussianCloud":
        """A new cloud with rows reordered by ``order`` (new position -> old index)."""
        return GaussianCloud(*(self.group(g)[order] for g in AttributeGroup))

    def filtered(self, keep: np.ndarray) -> "GaussianCloud":
        """A new cloud keeping only the rows selected by boolean mask ``keep``."""
        return GaussianCloud(*(self.group(g)[keep] for g in AttributeGroup))

    @staticmethod
    def empty() -> "GaussianCloud":
        return GaussianCloud(*(np.zeros((0, g.channel_count), np.float32) for g in AttributeGroup))

    def __eq__(self, other) -> bool:
        if not isinstance(other, GaussianCloud):
            return NotImplemented
        return all(
            np.array_equal(self.group(g), other.group(g)) for g in AttributeGroup
        )


def channel(cloud: GaussianCloud, group: AttributeGroup, index: int) -> np.ndarray:
    """Read-only view of one scalar channel: the N values of ``group[:, index]``."""
    if not 0 <= index < group.channel_count:
        raise IndexError(
            f"channel index {index} out of range for {group.name} "
            f"(channel_count={group.channel_count})"
        )
    return cloud.group(group)[:, index]


def _parse_header(f) -> tuple[int, list[str]]:
    """Parse the PLY header; return (vertex_count, declared property names)."""
    magic = f.readline().strip()
    if magic != b"ply":
        raise FormatError("not a PLY file (missing 'ply' magic)")

    fmt = None
    count = None
    props: list[str] = []
    in_vertex = False
    while True:
        raw = f.readline()
        if not raw:
            raise FormatError("unexpected end of file inside PLY header")
        line = raw.decode("ascii", errors="replace").strip()
        if line == "end_header":
            break
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        try:
            if parts[0] == "format":
                fmt = parts[1]
            elif parts[0] == "element":
                in_vertex = parts[1] == "vertex"
                if in_vertex:
                    count = int(parts[2])
                elif int(parts[2]) != 0:
                    raise UnsupportedFormatError(f"unsupported PLY element: {parts[1]}")
            elif parts[0] == "property" and in_vertex:
                if parts[1] not in _FLOAT_TYPES:
                    raise FormatError(f"property {parts[2]} has non-float type {parts[1]}")
                props.append(parts[2])
        except (IndexError, ValueError) as exc:
            raise FormatError(f"malformed PLY header line: {line!r}") from exc

    if fmt == "ascii":
        raise UnsupportedFormatError("ASCII PLY is not supported (binary_little_endian only)")
    if fmt != "binary_little_endian":
        raise UnsupportedFormatError(f"unsupported PLY format: {fmt}")
    if count is None:
        raise FormatError("PLY header declares no vertex element")
    return count, props


def load_ply(path) -> GaussianCloud:
    """Load a 3DGS model from a binary little-endian PLY file.

    The header must declare exactly the standard degree-3 layout (62 float
    properties). Normals are discarded. Raises FormatError naming the first
    missing property, UnsupportedFormatError for ASCII/foreign layouts, and
    ValidationError (with a row index) if any retained value is non-finite.
    """
    with open(path, "rb") as f:
        count, props = _parse_header(f)

        have = set(props)
        for name in _PLY_PROPERTIES:
            if name not in have:
                raise FormatError(f"missing property: {name}")
        if "f_rest_45" in have:
            raise UnsupportedFormatError(
                "SH degree above 3 (found f_rest_45); only degree-3 models are supported"
            )
        extra = have - set(_PLY_PROPERTIES)
        if extra:
            raise FormatError(f"unexpected property: {sorted(extra)[0]}")

        data = np.fromfile(f, dtype="<f4", count=count * len(props))
    if data.size != count * len(props):
        raise FormatError(
            f"PLY payload truncated: expected {count * len(props)} floats, got {data.size}"
        )
    data = data.reshape(count, len(props))

    # Column lookup by declared order (the standard layout is positional, but
    # files with the same properties in a different order are still valid PLY).
    col = {name: i for i, name in enumerate(props)}

    def take(names):
        return np.ascontiguousarray(data[:, [col[n] for n in names]])

    cloud = GaussianCloud(
        geometry=take(["x", "y", "z"]),
        rotation=take([f"rot_{i}" for i in range(4)]),
        scaling=take([f"scale_{i}" for i in range(3)]),
        opacity=take(["opacity"]),
        sh_dc=take([f"f_dc_{i}" for i in range(3)]),
        sh_ac=take([f"f_rest_{i}" for i in range(45)]),
    )
    cloud.validate_finite()
    return cloud


def save_ply(cloud: GaussianCloud, path) -> None:
    """Write ``cloud`` in the standard 3DGS PLY layout (normals as zeros).

    load_ply(save_ply(c)) reproduces every retained float bit-exactly.
    """
    n = cloud.count
    header = io.BytesIO()
    header.write(b"ply\nformat binary_little_endian 1.0\n")
    header.write(f"element vertex {n}\n".encode("ascii"))
    for name in _PLY_PROPERTIES:
        header.write(f"property float {name}\n".encode("ascii"))
    header.write(b"end_header\n")

    body = np.empty((n, len(_PLY_PROPERTIES)), dtype="<f4")
    body[:, 0:3] = cloud.geometry
    body[:, 3:6] = 0.0  # normals are not part of the model
    body[:, 6:9] = cloud.sh_dc
    body[:, 9:54] = cloud.sh_ac
    body[:, 54:55] = cloud.opacity
    body[:, 55:58] = cloud.scaling
    body[:, 58:62] = cloud.rotation

    try:
        with open(path, "wb") as f:
            f.write(header.getvalue())
            body.tofile(f)
    except OSError as exc:
        raise FormatError(f"cannot write PLY to {path}: {exc}") from exc
