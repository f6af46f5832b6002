"""Rate control by quantization depth: the L / M / S presets.

No retraining, no optimization: moving between rates is just re-running the
encoder with different per-group depths. Geometry keeps 16-17 bits (it is
the most error-sensitive group), while SH AC drops to 3-4 bits (least
sensitive, most voluminous).
"""

from splatcodec import AttributeGroup, PRESETS, encode, size_report, synthetic_cloud

cloud = synthetic_cloud(200_000, seed=3)
raw = 59 * 4 * cloud.count

print(f"{'preset':<8}{'size MB':>9}{'ratio':>8}   depths")
for name in ("L", "M", "S"):
    blob = encode(cloud, preset=name, seed=0)
    report = size_report(blob)
    depths = " ".join(
        f"{g.field}={PRESETS[name].depth(g)}" for g in AttributeGroup
    )
    print(f"{name:<8}{report.total_bytes / 1e6:>9.2f}{report.ratio:>7.1f}x   {depths}")

# Custom rates: override any group's depth.
blob = encode(cloud, preset="M", depth_overrides={AttributeGroup.SHAC: 2}, seed=0)
report = size_report(blob)
print(f"{'custom':<8}{report.total_bytes / 1e6:>9.2f}{report.ratio:>7.1f}x   M + sh_ac=2")

print("\nwhere the bytes go at preset M:")
blob = encode(cloud, preset="M", seed=0)
report = size_report(blob)
for field, nbytes in sorted(report.group_bytes.items(), key=lambda kv: -kv[1]):
    print(f"  {field:<10}{nbytes / 1e3:>10.1f} kB  {100 * nbytes / report.total_bytes:5.1f}%")
