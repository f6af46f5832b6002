"""Command-line pipeline: encode, decode, analyze, prune, info.

Every subcommand is deterministic given identical flags, inputs and seed.
Reports are machine-readable (CSV/JSON); plotting is left to downstream
tools. Worker parallelism comes from --threads (or the EGS_THREADS
environment variable), and never changes any output bytes.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import container
from .errors import CodecError
from .model import AttributeGroup, GaussianCloud, load_ply, save_ply
from .quantize import PRESETS, quantize_channel, sensitivity_sweep
from .rangecoder import encode_symbols
from .stats import nmi_heatmap
from .pruning import geometry_prune, importance_prune, proxy_importance, rectify_shac

_GROUPS = {g.field: g for g in AttributeGroup}
_GROUPS["shdc"] = AttributeGroup.SHDC
_GROUPS["shac"] = AttributeGroup.SHAC

SWEEP_DEPTHS = [2, 4, 6, 8, 10, 12, 14, 16]


def _parse_depth(spec: str):
    try:
        name, value = spec.split("=", 1)
        group = _GROUPS[name.strip().lower()]
        depth = int(value)
    except (ValueError, KeyError):
        raise argparse.ArgumentTypeError(
            f"expected GROUP=Q with GROUP in {sorted(set(_GROUPS))}, got {spec!r}"
        ) from None
    if not 1 <= depth <= 24:
        raise argparse.ArgumentTypeError(f"depth {depth} outside [1, 24]")
    return group, depth


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("EGS_THREADS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def _secs(t: float) -> str:
    return f"{t:#.4g} s"


def _load(path) -> GaussianCloud:
    if not Path(path).exists():
        raise CodecError(f"cannot open: {path}")
    return load_ply(path)


def _cmd_encode(args) -> int:
    cloud = _load(args.input)
    t0 = time.perf_counter()
    data = container.encode(
        cloud,
        preset=args.preset,
        depth_overrides=dict(args.depth or []),
        seed=args.seed,
        threads=_threads(args),
        external_gpcc=args.external_gpcc,
    )
    elapsed = time.perf_counter() - t0
    Path(args.output).write_bytes(data)

    report = container.size_report(data)
    print(f"encoded {report.count} Gaussians in {_secs(elapsed)}")
    for group in AttributeGroup:
        nbytes = report.group_bytes[group.field]
        share = 100.0 * nbytes / report.total_bytes if report.total_bytes else 0.0
        print(f"  {group.field:<10} {nbytes:>12} B  {share:5.1f}%")
    print(f"  {'header':<10} {report.header_bytes:>12} B")
    print(f"total {report.total_bytes} B, raw payload {report.raw_bytes} B, "
          f"ratio {report.ratio:.2f}x")
    return 0


def _cmd_decode(args) -> int:
    data = Path(args.input).read_bytes() if Path(args.input).exists() else None
    if data is None:
        raise CodecError(f"cannot open: {args.input}")
    t0 = time.perf_counter()
    cloud = container.decode(data, threads=_threads(args), external_gpcc=args.external_gpcc)
    elapsed = time.perf_counter() - t0
    save_ply(cloud, args.output)
    print(f"decoded {cloud.count} Gaussians in {_secs(elapsed)}")
    return 0


def _cmd_info(args) -> int:
    if not Path(args.input).exists():
        raise CodecError(f"cannot open: {args.input}")
    data = Path(args.input).read_bytes()
    info = container.parse_header(data)
    report = container.size_report(data)
    print(f"count: {info.count}")
    print(f"preset: {info.preset}")
    print(f"geometry codec: {'internal' if info.codec_tag == container.CODEC_INTERNAL else 'external'}")
    depths = {}
    for grid in info.geometry_grids:
        depths["geometry"] = grid.depth_q
    for h in info.channels:
        depths[h.group.field] = h.grid.depth_q
    print("depths:", ", ".join(f"{k}={v}" for k, v in depths.items()))
    for group in AttributeGroup:
        print(f"  {group.field:<10} {report.group_bytes[group.field]:>12} B")
    print(f"  {'header':<10} {report.header_bytes:>12} B")
    print(f"total {report.total_bytes} B, ratio vs raw {report.ratio:.2f}x")
    return 0


def _cmd_prune(args) -> int:
    cloud = _load(args.input)
    n0 = cloud.count
    if args.scores is not None:
        scores = np.loadtxt(args.scores, dtype=np.float64, ndmin=1)
    else:
        scores = proxy_importance(cloud)
    cloud = importance_prune(cloud, scores, args.theta1)
    cloud = geometry_prune(cloud, args.theta2)
    if args.rectify_shac is not None:
        cloud = rectify_shac(cloud, args.rectify_shac)
    save_ply(cloud, args.output)
    print(f"pruned {n0} -> {cloud.count} Gaussians "
          f"(theta1={args.theta1}%, theta2={args.theta2}%)")
    return 0


def _write_rows(out_dir: Path, stem: str, header: list, rows: list) -> None:
    with open(out_dir / f"{stem}.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    with open(out_dir / f"{stem}.json", "w") as f:
        json.dump([dict(zip(header, row)) for row in rows], f, indent=1)


def _analyze_entropy(cloud, preset, seed, out_dir) -> None:
    rows = []
    for chan_id, (group, c) in enumerate(container.CODED_CHANNELS):
        values = cloud.group(group)[:, c]
        depth = preset.depth(group)
        idx, grid = quantize_channel(values, depth)
        counts = np.bincount(idx, minlength=grid.levels)
        p = counts[counts > 0] / idx.size
        entropy = float(-(p * np.log2(p)).sum())
        _, _, pmf = container._fit_channel(group, idx, grid, seed, chan_id)
        actual = len(encode_symbols(idx, pmf).data) * 8 / idx.size
        overhead = 100.0 * (actual / entropy - 1.0) if entropy > 0 else 0.0
        rows.append([group.field, c, depth,
                     round(entropy, 4), round(actual, 4), round(overhead, 3)])
    _write_rows(out_dir, "entropy", ["group", "channel", "Q", "entropy", "actual", "overhead_pct"], rows)
    print(f"entropy report: {out_dir / 'entropy.csv'}")


def _analyze_nmi(cloud, bins, threads, out_dir) -> None:
    matrix = nmi_heatmap(cloud, bin_count=bins, threads=threads)
    with open(out_dir / "nmi.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["channel"] + matrix.labels)
        for label, row in zip(matrix.labels, matrix.values):
            writer.writerow([label] + [f"{v:.6f}" for v in row])
    with open(out_dir / "nmi.json", "w") as f:
        json.dump({"labels": matrix.labels, "values": matrix.values.tolist()}, f)
    print(f"nmi report: {out_dir / 'nmi.csv'}")


def _analyze_fit(cloud, seed, out_dir) -> None:
    from .fitting import fit_gmm, fit_laplace

    report = {}
    for chan_id, (group, c) in enumerate(container.CODED_CHANNELS):
        values = cloud.group(group)[:, c].astype(np.float64)
        label = f"{group.field}_{c}"
        if group is AttributeGroup.SHAC and values.size >= 2:
            params = fit_laplace(values)
            report[label] = {"model": "laplace", "mu": params.mu, "b": params.b}
        elif group in (AttributeGroup.ROTATION, AttributeGroup.SCALING,
                       AttributeGroup.OPACITY) and values.size >= 32:
            params = fit_gmm(values, seed=(seed, chan_id))
            report[label] = {
                "model": "gmm", "k": params.k,
                "weights": params.weights.tolist(),
                "means": params.means.tolist(),
                "variances": params.variances.tolist(),
            }
        else:
            report[label] = {"model": "empirical"}
    with open(out_dir / "fits.json", "w") as f:
        json.dump(report, f, indent=1)
    print(f"fit report: {out_dir / 'fits.json'}")


def _analyze_sensitivity(cloud, out_dir) -> None:
    rows = []
    for group in AttributeGroup:
        for mse, depth in sensitivity_sweep(cloud, group, SWEEP_DEPTHS):
            rows.append([group.field, depth, f"{mse:.6e}"])
    _write_rows(out_dir, "sensitivity", ["group", "Q", "normalized_mse"], rows)
    print(f"sensitivity report: {out_dir / 'sensitivity.csv'}")


def _cmd_analyze(args) -> int:
    cloud = _load(args.input)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    preset = PRESETS[args.preset].with_overrides(dict(args.depth or []))
    ran_any = False
    if args.entropy:
        _analyze_entropy(cloud, preset, args.seed, out_dir)
        ran_any = True
    if args.nmi:
        _analyze_nmi(cloud, args.bins, _threads(args), out_dir)
        ran_any = True
    if args.fit:
        _analyze_fit(cloud, args.seed, out_dir)
        ran_any = True
    if args.sensitivity:
        _analyze_sensitivity(cloud, out_dir)
        ran_any = True
    if not ran_any:
        print("nothing to do: pass --entropy, --nmi, --fit and/or --sensitivity",
              file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splatcodec",
        description="Entropy codec for 3D Gaussian Splatting models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: EGS_THREADS or hardware)")

    p = sub.add_parser("encode", help="PLY -> .egs container")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--preset", choices=sorted(PRESETS), default="M")
    p.add_argument("--depth", type=_parse_depth, action="append", metavar="GROUP=Q",
                   help="override one group's quantization depth (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--external-gpcc", default=None, metavar="BINARY",
                   help="delegate geometry to an external point-cloud codec")
    common(p)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("decode", help=".egs container -> PLY")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--external-gpcc", default=None, metavar="BINARY")
    common(p)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("analyze", help="statistical reports (CSV + JSON)")
    p.add_argument("input")
    p.add_argument("--nmi", action="store_true", help="channel correlation matrix")
    p.add_argument("--fit", action="store_true", help="fitted distribution parameters")
    p.add_argument("--entropy", action="store_true",
                   help="per-channel entropy vs actual coded bits")
    p.add_argument("--sensitivity", action="store_true",
                   help="quantization error sweep per group")
    p.add_argument("--bins", type=int, default=256)
    p.add_argument("--preset", choices=sorted(PRESETS), default="M")
    p.add_argument("--depth", type=_parse_depth, action="append", metavar="GROUP=Q")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory for reports")
    common(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("prune", help="importance + geometry-tail pruning")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--theta1", type=float, default=0.0, metavar="PCT")
    p.add_argument("--theta2", type=float, default=0.0, metavar="PCT")
    p.add_argument("--scores", default=None,
                   help="sidecar importance scores, one per line")
    p.add_argument("--rectify-shac", type=float, default=None, metavar="TAIL_PROB",
                   help="clamp SH AC channels to fitted Laplace quantiles")
    p.set_defaults(func=_cmd_prune)

    p = sub.add_parser("info", help="container summary")
    p.add_argument("input")
    p.set_defaults(func=_cmd_info)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CodecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
