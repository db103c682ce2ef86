import json

import numpy as np
import pytest

from src.cli import dispatch
from src.dataset import read_manifest
from src.geometry import save_disparity
from src.imgcore import load_image, save_image


@pytest.fixture(autouse=True)
def _quiet_progress(monkeypatch):
    monkeypatch.setenv("STEREOBENCH_PROGRESS", "0")


def _image(seed: int, height: int = 16, width: int = 16) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 256, size=(height, width, 3)).astype(np.float64)


def test_unknown_subcommand_is_a_usage_error(capsys):
    assert dispatch(["teleport"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_required_flag_is_a_usage_error():
    assert dispatch(["anaglyph", "--left", "a.png"]) == 2


def test_domain_errors_exit_with_one(tmp_path, capsys):
    code = dispatch(["stats", "--manifest", str(tmp_path / "missing.jsonl")])

    assert code == 1
    assert "Manifest not found" in capsys.readouterr().err


def test_synth_eval_correlate_round_trip(tmp_path, capsys):
    bench = tmp_path / "bench"
    assert dispatch(["--seed", "7", "synth", "--out", str(bench), "--pairs", "4"]) == 0
    manifest = read_manifest(bench / "manifest.jsonl")
    assert len(manifest.records) == 4

    report_path = tmp_path / "reports" / "warp.json"
    html_path = tmp_path / "reports" / "warp.html"
    code = dispatch(
        [
            "--threads", "2",
            "eval",
            "--manifest", str(bench / "manifest.jsonl"),
            "--candidates", str(bench / "warp"),
            "--report", str(report_path),
            "--html", str(html_path),
            "--alpha", "0.5",
        ]
    )
    assert code == 0
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert report["config"]["siou"]["alpha"] == 0.5
    assert report["config"]["seed"] == 42
    assert len(report["per_pair"]) == 4
    assert html_path.exists()

    ratings = tmp_path / "ratings.csv"
    lines = ["pair_id,annotator_id,score"]
    for score, record in enumerate(manifest.records, start=1):
        lines += [f"{record.pair_id},a,{score}", f"{record.pair_id},b,{score + 1}"]
    ratings.write_text("\n".join(lines) + "\n", encoding="utf-8")

    out = tmp_path / "corr.json"
    assert dispatch(["correlate", "--report", str(report_path), "--annotations", str(ratings), "--out", str(out)]) == 0
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["pairs"] == 4
    assert set(payload["spearman"]) == {"siou", "edge_iou", "diff_iou", "rmse", "psnr", "ssim"}


def test_warp_fill_anaglyph_heatmap_edges(tmp_path):
    left = _image(0)
    right = _image(1)
    save_image(tmp_path / "left.png", left)
    save_image(tmp_path / "right.png", right)
    save_disparity(tmp_path / "disp.png", np.full((16, 16), 2.0))

    assert dispatch(
        [
            "warp",
            "--left", str(tmp_path / "left.png"),
            "--disparity", str(tmp_path / "disp.png"),
            "--out", str(tmp_path / "warped.png"),
            "--occlusion", str(tmp_path / "occ.png"),
        ]
    ) == 0
    occlusion = load_image(tmp_path / "occ.png")[:, :, 0] > 0
    assert occlusion.sum(axis=1).tolist() == [2] * 16

    assert dispatch(
        [
            "fill",
            "--warped", str(tmp_path / "warped.png"),
            "--occlusion", str(tmp_path / "occ.png"),
            "--out", str(tmp_path / "filled.png"),
        ]
    ) == 0
    filled = load_image(tmp_path / "filled.png")
    np.testing.assert_array_equal(filled[:, :14], left[:, 2:])
    np.testing.assert_array_equal(filled[:, 15], left[:, 15])

    assert dispatch(
        ["anaglyph", "--left", str(tmp_path / "left.png"), "--right", str(tmp_path / "right.png"), "--out", str(tmp_path / "ana.png")]
    ) == 0
    anaglyph = load_image(tmp_path / "ana.png")
    np.testing.assert_array_equal(anaglyph[:, :, 0], left[:, :, 0])

    assert dispatch(["heatmap", "--a", str(tmp_path / "left.png"), "--b", str(tmp_path / "left.png"), "--out", str(tmp_path / "heat.png")]) == 0
    assert not load_image(tmp_path / "heat.png").any()

    assert dispatch(["edges", "--image", str(tmp_path / "left.png"), "--out", str(tmp_path / "edges.png"), "--canny-low", "20"]) == 0
    assert load_image(tmp_path / "edges.png").shape == (16, 16, 3)


def test_ingest_partition_stats(tmp_path, capsys):
    frames = tmp_path / "frames"
    frames.mkdir()
    for index in range(16):
        save_image(frames / f"{index:03d}.png", np.full((6, 16, 3), float(index)))

    manifest = tmp_path / "manifest.jsonl"
    base = ["ingest", "--frames", str(frames), "--manifest", str(manifest), "--width", "8", "--height", "6"]
    assert dispatch([*base, "--out", str(tmp_path / "a"), "--source-id", "a", "--category", "indoor"]) == 0
    assert dispatch([*base, "--out", str(tmp_path / "b"), "--source-id", "b", "--category", "indoor", "--append"]) == 0
    assert len(read_manifest(manifest).records) == 4

    split = tmp_path / "split.jsonl"
    assert dispatch(["partition", "--manifest", str(manifest), "--out", str(split), "--per-category-test", "2"]) == 0
    records = read_manifest(split).records
    assert sum(r.split == "test" for r in records) == 2
    assert len({r.source_id for r in records if r.split == "test"}) == 1

    capsys.readouterr()
    assert dispatch(["stats", "--manifest", str(split)]) == 0
    assert "indoor" in capsys.readouterr().out


def test_losscheck_passes(capsys):
    assert dispatch(["losscheck", "--trials", "2"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "PASS ddim_50_step_recovery" in out


def test_malformed_report_exits_with_one(tmp_path, capsys):
    report = tmp_path / "report.json"
    report.write_text("{not json", encoding="utf-8")
    ratings = tmp_path / "ratings.csv"
    ratings.write_text("pair_id,annotator_id,score\np,a,3\np,b,4\n", encoding="utf-8")

    code = dispatch(["correlate", "--report", str(report), "--annotations", str(ratings)])

    assert code == 1
    assert "malformed report JSON" in capsys.readouterr().err
