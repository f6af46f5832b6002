"""The .egs container: header, PMF tables, and framed entropy-coded payloads.

Layout (all little-endian, offsets absolute from the start of the stream):

    magic "EGS1" | version u8 | count u64 | sh_degree u8 | preset u8
    | geometry codec tag u8 (1 internal, 2 external blob)
    | 3 x geometry axis grid (v_min f32, v_max f32, depth u8)
    | geometry frame (offset u64, length u32, crc32 u32)
    | 56 x channel header
    | payload section (geometry payload, then channel payloads in order)

    channel header:
        group tag u8 | channel index u8 | depth u8 | v_min f32 | v_max f32
        | model tag u8 (0 empirical, 1 laplace, 2 gmm)
        | model params (laplace: mu f32, b f32; gmm: k u8 + k x (w, mean, var) f32)
        | pmf: L x u16 frequencies | payload length u32 | payload offset u64
        | crc32 u32

The 56 coded channels are rotation 0-3, scaling 0-2, opacity 0, SH DC 0-2,
SH AC 0-44, in that order. PMF frequencies are 1..65535 and sum to 2**16
per channel (with L >= 2 levels the largest entry fits 16 bits), so the
decoder reconstructs probabilities with pure integer reads; the fitted
model parameters ride along for inspection but are not needed to decode.
Model distribution parameters are estimated from the quantized channel
(a pure function of indices + grid), which is why re-encoding a decoded
model reproduces the identical bitstream.

Every payload carries a CRC-32; any mismatch, unknown tag, or truncated
frame raises a typed error before array reconstruction begins.
"""

from __future__ import annotations

import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import pccodec
from .errors import CorruptStreamError, FormatError, ValidationError
from .fitting import (
    GmmParams,
    LaplaceParams,
    PMF_TOTAL,
    Pmf,
    fit_empirical,
    fit_gmm,
    fit_laplace,
    discretize_pmf,
    refine_laplace_binned,
)
from .model import AttributeGroup, GaussianCloud
from .quantize import (
    PRESETS,
    QuantGrid,
    RatePreset,
    dequantize_channel,
    quantize_channel,
)
from .rangecoder import CodedPayload, decode_symbols, encode_symbols

MAGIC = b"EGS1"
VERSION = 1
SH_DEGREE = 3

CODEC_INTERNAL = 1
CODEC_EXTERNAL = 2

MODEL_EMPIRICAL = 0
MODEL_LAPLACE = 1
MODEL_GMM = 2

MAX_ENTROPY_DEPTH = 16  # every level needs freq >= 1 within the 2**16 total
MAX_GEOMETRY_DEPTH = pccodec.MAX_MORTON_DEPTH

_PRESET_TAGS = {"L": 0, "M": 1, "S": 2, "custom": 255}
_TAG_PRESETS = {v: k for k, v in _PRESET_TAGS.items()}

_GROUP_TAGS = {g: i for i, g in enumerate(AttributeGroup)}
_TAG_GROUPS = {i: g for g, i in _GROUP_TAGS.items()}

# Container order of the 56 entropy-coded channels.
CODED_CHANNELS = [
    (group, c)
    for group in (
        AttributeGroup.ROTATION,
        AttributeGroup.SCALING,
        AttributeGroup.OPACITY,
        AttributeGroup.SHDC,
        AttributeGroup.SHAC,
    )
    for c in range(group.channel_count)
]

_FIXED_HEADER = struct.Struct("<4sBQBBB")  # magic, version, count, sh_degree, preset, codec
_AXIS_GRID = struct.Struct("<ffB")
_GEO_FRAME = struct.Struct("<QII")
_CH_FIXED = struct.Struct("<BBBffB")
_CH_TAIL = struct.Struct("<IQI")


@dataclass
class ChannelHeader:
    group: AttributeGroup
    index: int
    grid: QuantGrid
    model_tag: int
    model: object  # LaplaceParams | GmmParams | None
    pmf: Pmf
    payload_len: int = 0
    payload_offset: int = 0
    crc32: int = 0

    def packed_size(self) -> int:
        params = {MODEL_EMPIRICAL: 0, MODEL_LAPLACE: 8}.get(self.model_tag)
        if params is None:
            params = 1 + 12 * self.model.k
        return _CH_FIXED.size + params + 2 * self.grid.levels + _CH_TAIL.size


@dataclass
class ContainerInfo:
    """Parsed header view of a container (no payload decoding)."""

    count: int
    preset: str
    codec_tag: int
    geometry_grids: tuple
    geometry_frame: tuple  # (offset, length, crc)
    channels: list = field(default_factory=list)
    header_size: int = 0
    total_size: int = 0


def _resolve_preset(preset, depth_overrides) -> RatePreset:
    if isinstance(preset, str):
        try:
            preset = PRESETS[preset]
        except KeyError:
            raise ValidationError(f"unknown preset {preset!r}; expected L, M or S") from None
    return preset.with_overrides(depth_overrides or {})


def _check_depths(preset: RatePreset) -> None:
    for group in AttributeGroup:
        depth = preset.depth(group)
        cap = MAX_GEOMETRY_DEPTH if group is AttributeGroup.GEOMETRY else MAX_ENTROPY_DEPTH
        if not 1 <= depth <= cap:
            raise ValidationError(
                f"depth {depth} for {group.field} outside [1, {cap}]"
            )


def _uniform_pmf(levels: int) -> Pmf:
    return Pmf(freqs=np.full(levels, PMF_TOTAL // levels, dtype=np.uint32))


def _fit_channel(group: AttributeGroup, idx: np.ndarray, grid: QuantGrid, seed, chan_id: int):
    """Model + PMF for one channel, as a pure function of (indices, grid).

    Falls back to the empirical PMF when there are too few samples to fit
    the group's parametric family.
    """
    n = idx.size
    if n == 0:
        return MODEL_EMPIRICAL, None, _uniform_pmf(grid.levels)
    if grid.step == 0.0:
        return MODEL_EMPIRICAL, None, fit_empirical(idx, grid)

    deq = dequantize_channel(idx, grid)
    if group is AttributeGroup.SHAC and n >= 2:
        counts = np.bincount(idx, minlength=grid.levels)
        params = refine_laplace_binned(counts, grid, fit_laplace(deq))
        return MODEL_LAPLACE, params, discretize_pmf(params, grid)
    if group in (AttributeGroup.ROTATION, AttributeGroup.SCALING, AttributeGroup.OPACITY):
        max_k = min(4, n // 8)
        if max_k >= 1:
            params = fit_gmm(deq, max_k=max_k, seed=(seed, chan_id))
            return MODEL_GMM, params, discretize_pmf(params, grid)
    return MODEL_EMPIRICAL, None, fit_empirical(idx, grid)


def encode(
    cloud: GaussianCloud,
    preset="M",
    depth_overrides: dict | None = None,
    seed: int = 0,
    threads: int | None = None,
    external_gpcc=None,
) -> bytes:
    """Encode a splat model into container bytes.

    Pipeline: quantize geometry, sort into canonical Morton order, permute
    all attributes, then per channel quantize / fit / discretize / range-code.
    Identical inputs, seed and preset give byte-identical output regardless
    of thread count.
    """
    cloud.validate_finite()
    preset = _resolve_preset(preset, depth_overrides)
    _check_depths(preset)
    n = cloud.count

    geo_depth = preset.depth(AttributeGroup.GEOMETRY)
    geo = cloud.group(AttributeGroup.GEOMETRY)
    geo_grids = []
    geo_idx = np.empty((n, 3), dtype=np.int64)
    for axis in range(3):
        if n:
            geo_idx[:, axis], grid = quantize_channel(geo[:, axis], geo_depth)
        else:
            grid = QuantGrid(0.0, 0.0, geo_depth)
        geo_grids.append(grid)

    codes = pccodec.morton_code(geo_idx[:, 0], geo_idx[:, 1], geo_idx[:, 2], geo_depth)
    order = np.argsort(codes, kind="stable")
    geo_idx = geo_idx[order]
    sorted_cloud = cloud.permuted(order)

    if external_gpcc is not None:
        codec_tag = CODEC_EXTERNAL
        geo_payload = pccodec.external_encode(external_gpcc, geo_idx, geo_depth)
    else:
        codec_tag = CODEC_INTERNAL
        geo_payload = pccodec.encode_geometry(geo_idx, geo_depth)

    def code_channel(job):
        chan_id, (group, c) = job
        values = sorted_cloud.group(group)[:, c]
        depth = preset.depth(group)
        if n:
            idx, grid = quantize_channel(values, depth)
        else:
            idx, grid = np.zeros(0, dtype=np.int64), QuantGrid(0.0, 0.0, depth)
        model_tag, model, pmf = _fit_channel(group, idx, grid, seed, chan_id)
        payload = encode_symbols(idx, pmf)
        header = ChannelHeader(
            group=group, index=c, grid=grid, model_tag=model_tag, model=model,
            pmf=pmf, payload_len=len(payload.data), crc32=zlib.crc32(payload.data),
        )
        return header, payload.data

    jobs = list(enumerate(CODED_CHANNELS))
    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            coded = list(pool.map(code_channel, jobs))
    else:
        coded = [code_channel(j) for j in jobs]

    return _assemble(n, preset, codec_tag, geo_grids, geo_payload, coded)


def _assemble(n, preset, codec_tag, geo_grids, geo_payload, coded) -> bytes:
    header_size = (
        _FIXED_HEADER.size
        + 3 * _AXIS_GRID.size
        + _GEO_FRAME.size
        + sum(h.packed_size() for h, _ in coded)
    )

    out = bytearray()
    preset_tag = _PRESET_TAGS.get(preset.name, _PRESET_TAGS["custom"])
    out += _FIXED_HEADER.pack(MAGIC, VERSION, n, SH_DEGREE, preset_tag, codec_tag)
    for grid in geo_grids:
        out += _AXIS_GRID.pack(grid.v_min, grid.v_max, grid.depth_q)
    out += _GEO_FRAME.pack(header_size, len(geo_payload.data), zlib.crc32(geo_payload.data))

    offset = header_size + len(geo_payload.data)
    for header, payload in coded:
        header.payload_offset = offset
        offset += len(payload)
        out += _pack_channel(header)
    assert len(out) == header_size

    out += geo_payload.data
    for _, payload in coded:
        out += payload
    return bytes(out)


def _pack_channel(h: ChannelHeader) -> bytes:
    buf = bytearray()
    buf += _CH_FIXED.pack(
        _GROUP_TAGS[h.group], h.index, h.grid.depth_q,
        h.grid.v_min, h.grid.v_max, h.model_tag,
    )
    if h.model_tag == MODEL_LAPLACE:
        buf += struct.pack("<ff", h.model.mu, h.model.b)
    elif h.model_tag == MODEL_GMM:
        buf += struct.pack("<B", h.model.k)
        for w, m, v in zip(h.model.weights, h.model.means, h.model.variances):
            buf += struct.pack("<fff", w, m, v)
    buf += h.pmf.freqs.astype("<u2").tobytes()
    buf += _CH_TAIL.pack(h.payload_len, h.payload_offset, h.crc32)
    return bytes(buf)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def unpack(self, fmt: struct.Struct):
        if self.pos + fmt.size > len(self.data):
            raise CorruptStreamError("container header truncated")
        values = fmt.unpack_from(self.data, self.pos)
        self.pos += fmt.size
        return values

    def take(self, nbytes: int) -> bytes:
        if self.pos + nbytes > len(self.data):
            raise CorruptStreamError("container header truncated")
        chunk = self.data[self.pos : self.pos + nbytes]
        self.pos += nbytes
        return chunk


def parse_header(data: bytes) -> ContainerInfo:
    """Parse and validate the container header; payloads are left untouched."""
    r = _Reader(data)
    magic, version, count, sh_degree, preset_tag, codec_tag = r.unpack(_FIXED_HEADER)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}; not a splatcodec container")
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    if sh_degree != SH_DEGREE:
        raise FormatError(f"unsupported SH degree {sh_degree}")
    if codec_tag not in (CODEC_INTERNAL, CODEC_EXTERNAL):
        raise FormatError(f"unknown geometry codec tag {codec_tag}")

    geo_grids = []
    for _ in range(3):
        v_min, v_max, depth = r.unpack(_AXIS_GRID)
        if not 1 <= depth <= MAX_GEOMETRY_DEPTH:
            raise FormatError(f"geometry depth {depth} outside [1, {MAX_GEOMETRY_DEPTH}]")
        try:
            geo_grids.append(QuantGrid(v_min, v_max, depth))
        except ValidationError as exc:
            raise FormatError(f"bad geometry grid: {exc}") from exc
    geo_frame = r.unpack(_GEO_FRAME)

    info = ContainerInfo(
        count=count,
        preset=_TAG_PRESETS.get(preset_tag, "custom"),
        codec_tag=codec_tag,
        geometry_grids=tuple(geo_grids),
        geometry_frame=geo_frame,
        total_size=len(data),
    )

    seen = set()
    for _ in CODED_CHANNELS:
        gtag, index, depth, v_min, v_max, model_tag = r.unpack(_CH_FIXED)
        group = _TAG_GROUPS.get(gtag)
        if group is None or group is AttributeGroup.GEOMETRY:
            raise FormatError(f"bad channel group tag {gtag}")
        if index >= group.channel_count:
            raise FormatError(f"channel index {index} out of range for {group.field}")
        if not 1 <= depth <= MAX_ENTROPY_DEPTH:
            raise FormatError(f"channel depth {depth} outside [1, {MAX_ENTROPY_DEPTH}]")

        if model_tag == MODEL_LAPLACE:
            mu, b = struct.unpack("<ff", r.take(8))
            model = LaplaceParams(mu=float(mu), b=float(b)) if b > 0 else None
        elif model_tag == MODEL_GMM:
            (k,) = struct.unpack("<B", r.take(1))
            if not 1 <= k <= 4:
                raise FormatError(f"GMM component count {k} outside [1, 4]")
            flat = struct.unpack(f"<{3 * k}f", r.take(12 * k))
            try:
                model = GmmParams(
                    weights=np.array(flat[0::3]) / max(sum(flat[0::3]), 1e-30),
                    means=np.array(flat[1::3]),
                    variances=np.maximum(np.array(flat[2::3]), 1e-8),
                )
            except ValidationError as exc:
                raise FormatError(f"bad mixture parameters in header: {exc}") from exc
        elif model_tag == MODEL_EMPIRICAL:
            model = None
        else:
            raise FormatError(f"unknown model tag {model_tag}")

        levels = 1 << depth
        freqs = np.frombuffer(r.take(2 * levels), dtype="<u2").astype(np.uint32)
        if freqs.min() < 1 or int(freqs.sum()) != PMF_TOTAL:
            raise CorruptStreamError(
                f"PMF for {group.field}_{index} does not sum to {PMF_TOTAL}"
            )
        payload_len, payload_offset, crc = r.unpack(_CH_TAIL)

        try:
            grid = QuantGrid(v_min, v_max, depth)
        except ValidationError as exc:
            raise FormatError(f"bad grid for {group.field}_{index}: {exc}") from exc
        if (group, index) in seen:
            raise FormatError(f"duplicate channel {group.field}_{index}")
        seen.add((group, index))
        info.channels.append(
            ChannelHeader(
                group=group, index=index, grid=grid, model_tag=model_tag,
                model=model, pmf=Pmf(freqs=freqs), payload_len=payload_len,
                payload_offset=payload_offset, crc32=crc,
            )
        )

    if {(g, c) for g, c in CODED_CHANNELS} != seen:
        raise FormatError("channel table does not cover all 56 coded channels")
    info.header_size = r.pos
    return info


def _slice_payload(data: bytes, offset: int, length: int, crc: int, what: str) -> bytes:
    if offset + length > len(data):
        raise CorruptStreamError(f"{what} payload frame extends past end of container")
    chunk = data[offset : offset + length]
    if zlib.crc32(chunk) != crc:
        raise CorruptStreamError(f"{what} payload checksum mismatch")
    return chunk


def decode(data: bytes, threads: int | None = None, external_gpcc=None) -> GaussianCloud:
    """Decode container bytes into a cloud (canonical order, quantized precision)."""
    info = parse_header(data)
    n = info.count

    offset, length, crc = info.geometry_frame
    geo_bytes = _slice_payload(data, offset, length, crc, "geometry")
    geo_payload = CodedPayload(data=geo_bytes, symbol_count=n)
    depth = max(g.depth_q for g in info.geometry_grids)
    if info.codec_tag == CODEC_EXTERNAL:
        if external_gpcc is None:
            raise ValidationError(
                "container uses an external geometry codec; pass external_gpcc"
            )
        geo_idx = pccodec.external_decode(external_gpcc, geo_payload, n, depth)
    else:
        geo_idx = pccodec.decode_geometry(geo_payload, n, depth)

    geometry = np.empty((n, 3), dtype=np.float32)
    for axis in range(3):
        geometry[:, axis] = dequantize_channel(geo_idx[:, axis], info.geometry_grids[axis])

    arrays = {
        group: np.empty((n, group.channel_count), dtype=np.float32)
        for group, _ in CODED_CHANNELS
    }

    def decode_channel(h: ChannelHeader):
        chunk = _slice_payload(
            data, h.payload_offset, h.payload_len, h.crc32, f"{h.group.field}_{h.index}"
        )
        idx = decode_symbols(CodedPayload(data=chunk, symbol_count=n), h.pmf, n)
        return h, dequantize_channel(idx, h.grid)

    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(decode_channel, info.channels))
    else:
        results = [decode_channel(h) for h in info.channels]
    for h, values in results:
        arrays[h.group][:, h.index] = values

    return GaussianCloud(
        geometry=geometry,
        rotation=arrays[AttributeGroup.ROTATION],
        scaling=arrays[AttributeGroup.SCALING],
        opacity=arrays[AttributeGroup.OPACITY],
        sh_dc=arrays[AttributeGroup.SHDC],
        sh_ac=arrays[AttributeGroup.SHAC],
    )


@dataclass(frozen=True)
class SizeReport:
    """Byte accounting of one container, summing exactly to the file size."""

    count: int
    total_bytes: int
    header_bytes: int
    group_bytes: dict

    @property
    def raw_bytes(self) -> int:
        """Uncompressed-equivalent baseline: 59 float32 channels per Gaussian."""
        return 59 * 4 * self.count

    @property
    def ratio(self) -> float:
        return self.raw_bytes / self.total_bytes if self.total_bytes else 0.0


def size_report(data: bytes) -> SizeReport:
    """Per-group payload byte breakdown from the header (no payload decode)."""
    info = parse_header(data)
    group_bytes = {group.field: 0 for group in AttributeGroup}
    group_bytes[AttributeGroup.GEOMETRY.field] = info.geometry_frame[1]
    for h in info.channels:
        group_bytes[h.group.field] += h.payload_len
    payload_total = sum(group_bytes.values())
    return SizeReport(
        count=info.count,
        total_bytes=len(data),
        header_bytes=len(data) - payload_total,
        group_bytes=group_bytes,
    )
