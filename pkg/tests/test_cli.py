import csv
import json

import numpy as np
import pytest

from splatcodec import load_ply, save_ply, synthetic_cloud
from splatcodec.cli import main


@pytest.fixture(scope="module")
def ply_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "model.ply"
    save_ply(synthetic_cloud(3_000, seed=1), path)
    return path


def test_encode_decode_roundtrip(ply_file, tmp_path, capsys):
    egs = tmp_path / "model.egs"
    out_ply = tmp_path / "roundtrip.ply"
    assert main(["encode", str(ply_file), str(egs), "--preset", "M"]) == 0
    enc_out = capsys.readouterr().out
    assert "ratio" in enc_out and "sh_ac" in enc_out
    assert " s" in enc_out  # wall-clock timing

    assert main(["decode", str(egs), str(out_ply)]) == 0
    dec_out = capsys.readouterr().out
    assert "decoded 3000 Gaussians" in dec_out

    original = load_ply(ply_file)
    decoded = load_ply(out_ply)
    assert decoded.count == original.count
    # reconstruction error bounded by each channel's quantization step
    assert np.abs(np.sort(decoded.opacity[:, 0]) - np.sort(original.opacity[:, 0])).max() < 0.1


def test_depth_override_shrinks_payload(ply_file, tmp_path, capsys):
    a, b = tmp_path / "a.egs", tmp_path / "b.egs"
    assert main(["encode", str(ply_file), str(a), "--depth", "shac=3"]) == 0
    assert main(["encode", str(ply_file), str(b), "--depth", "shac=6"]) == 0
    capsys.readouterr()
    assert a.stat().st_size < b.stat().st_size


def test_info(ply_file, tmp_path, capsys):
    egs = tmp_path / "model.egs"
    main(["encode", str(ply_file), str(egs)])
    capsys.readouterr()
    assert main(["info", str(egs)]) == 0
    out = capsys.readouterr().out
    assert "count: 3000" in out
    assert "sh_ac=4" in out


def test_missing_input_exits_one(tmp_path, capsys):
    assert main(["encode", str(tmp_path / "nope.ply"), str(tmp_path / "x.egs")]) == 1
    assert "cannot open" in capsys.readouterr().err


def test_corrupt_container_exits_one(ply_file, tmp_path, capsys):
    egs = tmp_path / "model.egs"
    main(["encode", str(ply_file), str(egs)])
    data = bytearray(egs.read_bytes())
    data[-3] ^= 0xFF
    egs.write_bytes(bytes(data))
    capsys.readouterr()
    assert main(["decode", str(egs), str(tmp_path / "out.ply")]) == 1
    assert "error" in capsys.readouterr().err


def test_prune_reports_counts(ply_file, tmp_path, capsys):
    out = tmp_path / "pruned.ply"
    assert main(["prune", str(ply_file), str(out),
                 "--theta1", "40", "--theta2", "1"]) == 0
    assert "3000 -> " in capsys.readouterr().out
    from splatcodec import pruned_count
    assert load_ply(out).count == pruned_count(3000, 40.0, 1.0)


def test_prune_with_sidecar_scores(ply_file, tmp_path, capsys):
    scores = tmp_path / "scores.txt"
    rng = np.random.default_rng(0)
    np.savetxt(scores, rng.random(3000))
    out = tmp_path / "pruned.ply"
    assert main(["prune", str(ply_file), str(out), "--theta1", "10",
                 "--scores", str(scores)]) == 0
    assert load_ply(out).count == 2700


def test_analyze_reports(ply_file, tmp_path, capsys):
    out_dir = tmp_path / "reports"
    assert main(["analyze", str(ply_file), "--entropy", "--fit", "--sensitivity",
                 "--out", str(out_dir)]) == 0
    capsys.readouterr()

    with open(out_dir / "entropy.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 56
    shac_overheads = [float(r["overhead_pct"]) for r in rows if r["group"] == "sh_ac"]
    assert max(shac_overheads) < 1.0

    with open(out_dir / "fits.json") as f:
        fits = json.load(f)
    assert fits["sh_ac_0"]["model"] == "laplace"
    assert fits["rotation_0"]["model"] == "gmm"
    assert fits["rotation_0"]["k"] <= 4
    assert fits["sh_dc_0"]["model"] == "empirical"

    with open(out_dir / "sensitivity.csv") as f:
        srows = list(csv.DictReader(f))
    geo = [float(r["normalized_mse"]) for r in srows if r["group"] == "geometry"]
    assert geo == sorted(geo, reverse=True)


def test_analyze_nmi_csv_layout(tmp_path, capsys):
    ply = tmp_path / "small.ply"
    save_ply(synthetic_cloud(400, seed=3), ply)
    out_dir = tmp_path / "reports"
    assert main(["analyze", str(ply), "--nmi", "--bins", "16",
                 "--out", str(out_dir), "--threads", "4"]) == 0
    capsys.readouterr()
    with open(out_dir / "nmi.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0][0] == "channel" and len(rows[0]) == 57  # label column + 56
    assert len(rows) == 57
    with open(out_dir / "nmi.json") as f:
        loaded = json.load(f)
    values = np.array(loaded["values"])
    assert values.shape == (56, 56)
    assert np.allclose(values, values.T)


def test_analyze_without_flags_errors(ply_file, capsys):
    assert main(["analyze", str(ply_file)]) == 1
    assert "nothing to do" in capsys.readouterr().err


def test_threads_env_fallback(monkeypatch):
    from splatcodec.cli import _threads

    class Args:
        threads = None

    monkeypatch.setenv("EGS_THREADS", "3")
    assert _threads(Args()) == 3
    monkeypatch.delenv("EGS_THREADS")
    assert _threads(Args()) >= 1
    Args.threads = 7
    assert _threads(Args()) == 7


def test_shac_depth_nine_accepted(ply_file, tmp_path, capsys):
    # depths above the preset table are valid as long as they fit the coder
    egs = tmp_path / "m.egs"
    assert main(["encode", str(ply_file), str(egs), "--depth", "shac=9"]) == 0
    capsys.readouterr()
    from splatcodec.container import parse_header
    info = parse_header(egs.read_bytes())
    assert all(h.grid.depth_q == 9 for h in info.channels if h.group.field == "sh_ac")


def test_entropy_depth_17_rejected_at_pipeline(ply_file, tmp_path, capsys):
    # the flag parses (1..24) but the coded-channel cap is 16
    egs = tmp_path / "m.egs"
    assert main(["encode", str(ply_file), str(egs), "--depth", "shac=17"]) == 1
    assert "outside" in capsys.readouterr().err
