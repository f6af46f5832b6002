"""Lossless coding of quantized geometry (plus SH DC) as a colored point cloud.

Geometry drives the layout of the whole bitstream: Gaussians are reordered
into canonical Morton (Z-curve) order before any channel is coded, and every
attribute payload follows that same order. Rendering of a splat model is
order-invariant over the Gaussian set, so the original file order is not
transmitted.

The internal geometry coder delta-encodes consecutive Morton codes (sorted,
so deltas are non-negative) as LEB128 varints and squeezes the byte stream
through the adaptive order-0 coder. A bit-packed escape keeps the payload
within a few bytes of the raw 3Q bits/point on adversarial inputs. A tagged
extension point can delegate the geometry payload to an external point-cloud
codec binary instead (see ``external_encode``).
"""

from __future__ import annotations

import struct
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import CorruptStreamError, ValidationError
from .fitting import Pmf, fit_empirical
from .model import AttributeGroup, GaussianCloud
from .quantize import apply_grid
from .rangecoder import (
    CodedPayload,
    adaptive_byte_decode,
    adaptive_byte_encode,
    decode_symbols,
    encode_symbols,
)

MAX_MORTON_DEPTH = 21  # 3 * 21 = 63 bits

_MODE_DELTA = 0
_MODE_RAW = 1

_S3_MASKS = (
    (32, 0x1F00000000FFFF),
    (16, 0x1F0000FF0000FF),
    (8, 0x100F00F00F00F00F),
    (4, 0x10C30C30C30C30C3),
    (2, 0x1249249249249249),
)


def _split3(v: np.ndarray) -> np.ndarray:
    v = v & np.uint64(0x1FFFFF)
    for shift, mask in _S3_MASKS:
        v = (v | (v << np.uint64(shift))) & np.uint64(mask)
    return v


_C3_STEPS = (
    (2, 0x10C30C30C30C30C3),
    (4, 0x100F00F00F00F00F),
    (8, 0x1F0000FF0000FF),
    (16, 0x1F00000000FFFF),
    (32, 0x1FFFFF),
)


def _compact3(v: np.ndarray) -> np.ndarray:
    v = v & np.uint64(0x1249249249249249)
    for shift, mask in _C3_STEPS:
        v = (v ^ (v >> np.uint64(shift))) & np.uint64(mask)
    return v


def morton_code(qx, qy, qz, depth: int):
    """Interleave three quantized coordinates into a Z-order key.

    Bit k of x lands at position 3k, y at 3k+1, z at 3k+2. Accepts scalars
    or arrays; coordinates must fit in ``depth`` bits with depth <= 21.
    """
    if depth > MAX_MORTON_DEPTH:
        raise ValidationError(f"Morton depth {depth} exceeds {MAX_MORTON_DEPTH} bits per axis")
    scalar = np.isscalar(qx)
    qx = np.atleast_1d(np.asarray(qx, dtype=np.int64))
    qy = np.atleast_1d(np.asarray(qy, dtype=np.int64))
    qz = np.atleast_1d(np.asarray(qz, dtype=np.int64))
    limit = 1 << depth
    for name, q in (("x", qx), ("y", qy), ("z", qz)):
        if q.size and (q.min() < 0 or q.max() >= limit):
            raise IndexError(f"quantized {name} coordinate outside [0, 2^{depth})")
    code = (
        _split3(qx.astype(np.uint64))
        | (_split3(qy.astype(np.uint64)) << np.uint64(1))
        | (_split3(qz.astype(np.uint64)) << np.uint64(2))
    )
    return int(code[0]) if scalar else code


def morton_decode(codes: np.ndarray) -> np.ndarray:
    """Inverse of morton_code: (N,) keys -> (N, 3) coordinates."""
    codes = np.asarray(codes, dtype=np.uint64)
    out = np.empty((codes.size, 3), dtype=np.int64)
    out[:, 0] = _compact3(codes).astype(np.int64)
    out[:, 1] = _compact3(codes >> np.uint64(1)).astype(np.int64)
    out[:, 2] = _compact3(codes >> np.uint64(2)).astype(np.int64)
    return out


@dataclass(frozen=True)
class CanonicalOrder:
    """Permutation into canonical coding order (new position -> original index)."""

    permutation: np.ndarray


def canonical_sort(cloud: GaussianCloud, geo_grids) -> CanonicalOrder:
    """Stable Morton-order permutation of a cloud's quantized geometry.

    Ties (identical quantized positions) keep their original relative order,
    so sorting an already-canonical cloud is the identity.
    """
    gx, gy, gz = geo_grids
    geo = cloud.group(AttributeGroup.GEOMETRY)
    depth = max(g.depth_q for g in geo_grids)
    codes = morton_code(
        apply_grid(geo[:, 0], gx), apply_grid(geo[:, 1], gy), apply_grid(geo[:, 2], gz),
        depth=depth,
    )
    return CanonicalOrder(permutation=np.argsort(codes, kind="stable"))


def _bitpack(coords: np.ndarray, depth: int) -> bytes:
    shifts = np.arange(depth - 1, -1, -1, dtype=np.uint64)
    bits = (coords.astype(np.uint64)[:, :, None] >> shifts) & np.uint64(1)
    return np.packbits(bits.astype(np.uint8).ravel()).tobytes()

def _bitunpack(data: bytes, n: int, depth: int) -> np.ndarray:
    need = n * 3 * depth
    raw = np.frombuffer(data, dtype=np.uint8)
    if raw.size * 8 < need:
        raise CorruptStreamError("bit-packed geometry payload truncated")
    bits = np.unpackbits(raw, count=need).reshape(n, 3, depth).astype(np.uint64)
    weights = (np.uint64(1) << np.arange(depth - 1, -1, -1, dtype=np.uint64))
    return (bits * weights).sum(axis=2).astype(np.int64)


def encode_geometry(coords: np.ndarray, depth: int) -> CodedPayload:
    """Code canonically sorted quantized coordinates losslessly.

    ``coords`` is (N, 3) int in [0, 2^depth). Morton keys are delta-coded
    against the previous point (first point absolute) as varints, and the
    byte stream goes through the adaptive coder. If that ends up larger than
    bit-packing the coordinates directly, the packed form is stored instead,
    so the payload never exceeds raw size by more than a few bytes.
    """
    coords = np.ascontiguousarray(coords, dtype=np.int64)
    n = coords.shape[0]
    if n == 0:
        return CodedPayload(data=b"", symbol_count=0)
    codes = morton_code(coords[:, 0], coords[:, 1], coords[:, 2], depth=depth).astype(np.int64)
    deltas = np.diff(codes)
    if deltas.size and deltas.min() < 0:
        raise ValidationError("geometry is not in canonical Morton order (negative delta)")
    values = np.concatenate(([codes[0]], deltas))

    buf = np.empty(10 * n + 16, dtype=np.uint8)
    nbytes = _kernels.varint_encode(values, buf)
    coded = adaptive_byte_encode(buf[:nbytes])
    delta_payload = struct.pack("<BI", _MODE_DELTA, nbytes) + coded.data

    raw_payload = struct.pack("<B", _MODE_RAW) + _bitpack(coords, depth)
    body = delta_payload if len(delta_payload) <= len(raw_payload) else raw_payload
    return CodedPayload(data=body, symbol_count=n)


def decode_geometry(payload: CodedPayload, n: int, depth: int) -> np.ndarray:
    """Inverse of encode_geometry; returns (N, 3) int64 quantized coordinates."""
    if n == 0:
        return np.zeros((0, 3), dtype=np.int64)
    data = payload.data
    if len(data) < 1:
        raise CorruptStreamError("geometry payload is empty")
    mode = data[0]
    if mode == _MODE_RAW:
        return _bitunpack(data[1:], n, depth)
    if mode != _MODE_DELTA:
        raise CorruptStreamError(f"unknown geometry coding mode {mode}")
    if len(data) < 5:
        raise CorruptStreamError("geometry payload header truncated")
    (nbytes,) = struct.unpack_from("<I", data, 1)
    stream = adaptive_byte_decode(CodedPayload(data=data[5:], symbol_count=nbytes))
    values = np.empty(n, dtype=np.int64)
    used = _kernels.varint_decode(np.frombuffer(stream, dtype=np.uint8), n, values)
    if used < 0:
        raise CorruptStreamError("geometry varint stream truncated")
    codes = np.cumsum(values)
    limit_ok = 3 * depth >= 63 or codes.max() < (1 << (3 * depth))
    if values.min() < 0 or codes.min() < 0 or not limit_ok:
        raise CorruptStreamError("geometry Morton codes out of range")
    return morton_decode(codes.astype(np.uint64))


def encode_shdc(indices: np.ndarray, pmfs) -> list[CodedPayload]:
    """Code the three SH DC channels against their empirical PMFs."""
    indices = np.asarray(indices)
    return [encode_symbols(indices[:, c], pmfs[c]) for c in range(3)]


def decode_shdc(payloads, pmfs, n: int) -> np.ndarray:
    out = np.empty((n, 3), dtype=np.int64)
    for c in range(3):
        out[:, c] = decode_symbols(payloads[c], pmfs[c], n)
    return out


def shdc_pmfs(indices: np.ndarray, grids) -> list[Pmf]:
    indices = np.asarray(indices)
    return [fit_empirical(indices[:, c].astype(np.int64), grids[c]) for c in range(3)]


def external_encode(binary, coords: np.ndarray, depth: int) -> CodedPayload:
    """Delegate geometry coding to an external point-cloud codec binary.

    Contract: the binary is invoked as ``binary encode IN OUT`` where IN
    holds the (N, 3) quantized coordinates as little-endian uint32 triples
    and OUT receives the opaque compressed blob; ``binary decode IN OUT``
    must restore the exact coordinate multiset (any point order). A thin
    wrapper script adapts an MPEG G-PCC tool to this interface.
    """
    coords = np.ascontiguousarray(coords, dtype=np.int64)
    _require_depth_fits(coords, depth)
    with tempfile.TemporaryDirectory(prefix="splatcodec-gpcc-") as tmp:
        src = Path(tmp) / "points.u32"
        dst = Path(tmp) / "points.bin"
        coords.astype("<u4").tofile(src)
        _run_external(binary, "encode", src, dst)
        blob = dst.read_bytes()
    return CodedPayload(data=blob, symbol_count=coords.shape[0])


def external_decode(binary, payload: CodedPayload, n: int, depth: int) -> np.ndarray:
    """Inverse of external_encode; re-sorts the points into canonical order."""
    with tempfile.TemporaryDirectory(prefix="splatcodec-gpcc-") as tmp:
        src = Path(tmp) / "points.bin"
        dst = Path(tmp) / "points.u32"
        src.write_bytes(payload.data)
        _run_external(binary, "decode", src, dst)
        flat = np.fromfile(dst, dtype="<u4")
    if flat.size != 3 * n:
        raise CorruptStreamError(
            f"external codec returned {flat.size // 3} points, expected {n}"
        )
    coords = flat.reshape(n, 3).astype(np.int64)
    _require_depth_fits(coords, depth)
    codes = morton_code(coords[:, 0], coords[:, 1], coords[:, 2], depth=depth)
    return coords[np.argsort(codes, kind="stable")]


def _require_depth_fits(coords: np.ndarray, depth: int) -> None:
    if coords.size and (coords.min() < 0 or coords.max() >= (1 << depth)):
        raise ValidationError(f"coordinates exceed {depth} bits")


def _run_external(binary, mode: str, src: Path, dst: Path) -> None:
    try:
        subprocess.run([str(binary), mode, str(src), str(dst)], check=True,
                       capture_output=True)
    except FileNotFoundError as exc:
        raise ValidationError(f"external codec binary not found: {binary}") from exc
    except subprocess.CalledProcessError as exc:
        detail = exc.stderr.decode(errors="replace")[-200:]
        raise CorruptStreamError(f"external codec failed ({mode}): {detail}") from exc
