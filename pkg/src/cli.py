"""`stereobench` command line: one subcommand per toolkit operation.

Run with ``python -m src.cli <subcommand> ...``. Exit codes: 0 success, 1 domain
or I/O error (message on stderr), 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
import sys
from typing import Any, Callable, Sequence

from src.annotations import load_annotations
from src.config import load_config, section
from src.dataset import (
    CATEGORIES,
    DatasetManifest,
    category_stats,
    ingest_frames,
    partition,
    read_manifest,
    validate_manifest,
    write_manifest,
)
from src.diffusion import EcLossConfig, make_schedule, run_losscheck
from src.edges import CannyParams, canny
from src.errors import StereoBenchError
from src.geometry import WarpResult, fill_occlusions_nearest, forward_warp, load_disparity
from src.imgcore import BinaryMap, colorize_heatmap, diff_heatmap, load_image, render_anaglyph, save_image, to_grayscale
from src.metrics import MetricReport, SiouConfig
from src.pipeline import correlate_with_humans, render_report_html, run_eval, sweep_siou
from src.synthetic import write_benchmark

LOGGER = logging.getLogger("stereobench")

PROG = "stereobench"


# ---------- RESOLVED SETTINGS ----------

def _settings(args: argparse.Namespace) -> dict[str, Any]:
    """YAML defaults with command-line overrides applied."""
    cfg = load_config(args.config)
    canny_cfg = dict(section(cfg, "canny"))
    siou_cfg = dict(section(cfg, "siou"))
    for flag, key in (("canny_sigma", "sigma"), ("canny_low", "low_threshold"), ("canny_high", "high_threshold")):
        if getattr(args, flag, None) is not None:
            canny_cfg[key] = getattr(args, flag)
    for flag, key in (("alpha", "alpha"), ("diff_threshold", "diff_threshold")):
        if getattr(args, flag, None) is not None:
            siou_cfg[key] = getattr(args, flag)
    cfg["canny"] = canny_cfg
    cfg["siou"] = siou_cfg
    return cfg


def _canny_params(cfg: dict[str, Any]) -> CannyParams:
    return CannyParams.from_dict(section(cfg, "canny"))


def _siou_config(cfg: dict[str, Any]) -> SiouConfig:
    siou_cfg = dict(section(cfg, "siou"))
    siou_cfg["canny"] = _canny_params(cfg).to_dict()
    return SiouConfig.from_dict(siou_cfg)


def _weights(cfg: dict[str, Any]) -> tuple[float, float, float]:
    weights = section(cfg, "grayscale").get("weights") or (0.299, 0.587, 0.114)
    return tuple(float(w) for w in weights)  # type: ignore[return-value]


def _write_json(path: str | Path, payload: Any) -> Path:
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return out_path


def _load_mask(path: str | Path) -> BinaryMap:
    return to_grayscale(load_image(path)) > 127.5


# ---------- SUBCOMMANDS ----------

def cmd_ingest(args: argparse.Namespace) -> int:
    ds = section(_settings(args), "dataset")
    records = ingest_frames(
        args.frames,
        args.out,
        source_id=args.source_id,
        sample_stride=args.stride or int(ds.get("sample_stride", 8)),
        target_w=args.width or int(ds.get("target_width", 480)),
        target_h=args.height or int(ds.get("target_height", 540)),
        category=args.category,
    )
    existing = read_manifest(args.manifest).records if args.append and Path(args.manifest).exists() else []
    manifest = DatasetManifest(records=[*existing, *records])
    validate_manifest(manifest)
    print(write_manifest(args.manifest, manifest))
    return 0


def cmd_partition(args: argparse.Namespace) -> int:
    ds = section(_settings(args), "dataset")
    count = args.per_category_test if args.per_category_test is not None else int(ds.get("per_category_test", 500))
    split = partition(read_manifest(args.manifest), count, seed=args.seed)
    validate_manifest(split, check_files=False)
    print(write_manifest(args.out, split))
    return 0


def cmd_warp(args: argparse.Namespace) -> int:
    result = forward_warp(load_image(args.left), load_disparity(args.disparity))
    print(save_image(args.out, result.warped))
    if args.occlusion:
        print(save_image(args.occlusion, result.occlusion))
    return 0


def cmd_fill(args: argparse.Namespace) -> int:
    warped = load_image(args.warped)
    filled = fill_occlusions_nearest(WarpResult(warped=warped, occlusion=_load_mask(args.occlusion)))
    print(save_image(args.out, filled))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _settings(args)
    report = run_eval(
        read_manifest(args.manifest),
        args.candidates,
        cfg=_siou_config(cfg),
        workers=args.threads or int(section(cfg, "eval").get("workers", 0)) or None,
        splits=args.split,
        weights=_weights(cfg),
        extra_config={"grayscale": section(cfg, "grayscale"), "seed": args.seed},
    )
    print(report.write(args.report))
    if args.html:
        print(render_report_html(report, args.html))
    return 0


def cmd_correlate(args: argparse.Namespace) -> int:
    report = MetricReport.read(args.report)
    table = correlate_with_humans(report, load_annotations(args.annotations))
    print(table.table.to_string(float_format=lambda v: f"{v:.4f}"))
    if args.out:
        print(_write_json(args.out, table.to_dict()))
    if args.html:
        print(render_report_html(report, args.html, correlation=table))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _settings(args)
    sweep_cfg = section(cfg, "sweep")
    result = sweep_siou(
        read_manifest(args.manifest),
        args.candidates,
        load_annotations(args.annotations),
        alphas=sweep_cfg.get("alphas", (0.25, 0.5, 0.7, 0.75, 0.8)),
        thresholds=sweep_cfg.get("thresholds", (3, 5, 10, 15, 20)),
        calibration_fraction=float(sweep_cfg.get("calibration_fraction", 500 / 1100)),
        seed=args.seed,
        cfg=_siou_config(cfg),
        weights=_weights(cfg),
    )
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    result.table.to_csv(out_path, index=False)
    print(out_path)
    print(json.dumps(result.best))
    return 0


def cmd_anaglyph(args: argparse.Namespace) -> int:
    print(save_image(args.out, render_anaglyph(load_image(args.left), load_image(args.right))))
    return 0


def cmd_heatmap(args: argparse.Namespace) -> int:
    cfg = _settings(args)
    weights = _weights(cfg)
    diff = diff_heatmap(to_grayscale(load_image(args.a), weights), to_grayscale(load_image(args.b), weights))
    print(save_image(args.out, diff if args.gray else colorize_heatmap(diff)))
    return 0


def cmd_edges(args: argparse.Namespace) -> int:
    cfg = _settings(args)
    edges = canny(to_grayscale(load_image(args.image), _weights(cfg)), _canny_params(cfg))
    print(save_image(args.out, edges))
    return 0


def cmd_losscheck(args: argparse.Namespace) -> int:
    cfg = _settings(args)
    sched_cfg = section(cfg, "schedule")
    sched = make_schedule(
        str(sched_cfg.get("kind", "linear")),
        int(sched_cfg.get("total_steps", 1000)),
        float(sched_cfg.get("beta_start", 1e-4)),
        float(sched_cfg.get("beta_end", 0.02)),
    )
    ec = EcLossConfig(alpha=float(section(cfg, "ec_loss").get("alpha", 1.0)))
    results = run_losscheck(seed=args.seed, trials=args.trials, sched=sched, cfg=ec)
    for result in results:
        print(f"{'PASS' if result.passed else 'FAIL'} {result.name}: {result.detail}")
    return 0 if all(r.passed for r in results) else 1


def cmd_synth(args: argparse.Namespace) -> int:
    syn = section(_settings(args), "synthetic")
    manifest = write_benchmark(
        args.out,
        pairs=args.pairs or int(syn.get("pairs", 20)),
        seed=args.seed,
        ladder=syn.get("ladder", (1.0, 0.75, 0.5, 0.25, 0.0)),
        gain=args.gain if args.gain is not None else float(syn.get("baseline_gain", 3.0)),
        width=int(syn.get("width", 192)),
        height=int(syn.get("height", 96)),
    )
    print(f"{len(manifest.records)} pairs in {Path(args.out) / 'manifest.jsonl'}")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    print(category_stats(read_manifest(args.manifest)).to_string())
    return 0


# ---------- PARSER ----------

def _siou_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("SIoU / Canny (defaults from the config file)")
    group.add_argument("--alpha", type=float, help="edge-term weight (default 0.75)")
    group.add_argument("--diff-threshold", type=float, help="difference-map threshold (default 5)")
    group.add_argument("--canny-low", type=float, help="hysteresis low threshold (default 50)")
    group.add_argument("--canny-high", type=float, help="hysteresis high threshold (default 150)")
    group.add_argument("--canny-sigma", type=float, help="Gaussian sigma (default 1.4)")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description="Stereo conversion evaluation toolkit.")
    parser.add_argument("--threads", type=int, default=None, help="eval worker count (default: all cores)")
    parser.add_argument("--seed", type=int, default=42, help="random seed (default 42)")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--config", default=None, help="YAML config (default config/defaults.yaml)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    siou_flags = _siou_flags()

    def add(name: str, handler: Callable[[argparse.Namespace], int], help_text: str, parents=()) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text, parents=list(parents))
        p.set_defaults(handler=handler)
        return p

    p = add("ingest", cmd_ingest, "sample SBS frames into left/right pairs")
    p.add_argument("--frames", required=True, help="directory of SBS frames")
    p.add_argument("--out", required=True, help="directory for the split views")
    p.add_argument("--manifest", required=True, help="manifest to write")
    p.add_argument("--source-id", required=True)
    p.add_argument("--category", default="unlabeled", choices=CATEGORIES)
    p.add_argument("--stride", type=int, help="keep every n-th frame (default 8)")
    p.add_argument("--width", type=int, help="target view width (default 480)")
    p.add_argument("--height", type=int, help="target view height (default 540)")
    p.add_argument("--append", action="store_true", help="add to an existing manifest")

    p = add("partition", cmd_partition, "source-disjoint train/test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-category-test", type=int, help="test pairs per category (default 500)")

    p = add("warp", cmd_warp, "forward-warp a left view by its disparity")
    p.add_argument("--left", required=True)
    p.add_argument("--disparity", required=True, help="16-bit PNG or .f32 disparity")
    p.add_argument("--out", required=True)
    p.add_argument("--occlusion", help="where to write the occlusion mask")

    p = add("fill", cmd_fill, "nearest-neighbour fill of warp holes")
    p.add_argument("--warped", required=True)
    p.add_argument("--occlusion", required=True)
    p.add_argument("--out", required=True)

    p = add("eval", cmd_eval, "score candidates against a manifest", parents=[siou_flags])
    p.add_argument("--manifest", required=True)
    p.add_argument("--candidates", required=True, help="directory of <pair_id>.png")
    p.add_argument("--report", required=True, help="MetricReport JSON path")
    p.add_argument("--html", help="optional HTML summary path")
    p.add_argument("--split", nargs="+", default=["test"], choices=["train", "test"])

    p = add("correlate", cmd_correlate, "rank-correlate metrics with human ratings")
    p.add_argument("--report", required=True)
    p.add_argument("--annotations", required=True, help="CSV: pair_id, annotator_id, score")
    p.add_argument("--out", help="JSON output path")
    p.add_argument("--html", help="HTML summary including the correlation table")

    p = add("sweep", cmd_sweep, "search SIoU alpha and threshold against human ratings", parents=[siou_flags])
    p.add_argument("--manifest", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True, help="CSV of every swept setting")

    p = add("anaglyph", cmd_anaglyph, "red-cyan composite of a stereo pair")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--out", required=True)

    p = add("heatmap", cmd_heatmap, "absolute luminance difference map")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gray", action="store_true", help="write the raw grayscale difference")

    p = add("edges", cmd_edges, "Canny edge map of an image", parents=[siou_flags])
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)

    p = add("losscheck", cmd_losscheck, "EC loss gradient and sampler consistency checks")
    p.add_argument("--trials", type=int, default=20)

    p = add("synth", cmd_synth, "write the synthetic stereo benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--pairs", type=int, help="scene count (default 20)")
    p.add_argument("--gain", type=float, help="baseline gain of the warp candidate (default 3.0)")

    p = add("stats", cmd_stats, "pair counts per category and split")
    p.add_argument("--manifest", required=True)

    return parser


def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    logging.getLogger().setLevel(logging.DEBUG if args.verbose else logging.INFO)

    LOGGER.debug("%s %s", PROG, args.command)
    try:
        return args.handler(args)
    except (StereoBenchError, OSError) as exc:
        print(f"{PROG} {args.command}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
