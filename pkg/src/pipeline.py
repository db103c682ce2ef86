"""Benchmark execution: evaluation runs, human-correlation tables, SIoU sweeps and HTML reports."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

from jinja2 import Environment, FileSystemLoader, select_autoescape
import numpy as np
import pandas as pd
from tqdm import tqdm

from src.annotations import AnnotationSet
from src.config import default_workers, progress_enabled
from src.dataset import DatasetManifest, PairRecord
from src.edges import canny
from src.errors import (
    DegenerateInputError,
    EmptyInputError,
    InsufficientRecordsError,
    MissingCandidateError,
    UnknownPairIdError,
)
from src.imgcore import BT601_WEIGHTS, load_image, resize, to_grayscale
from src.metrics import (
    DEFAULT_SIOU,
    METRIC_COLUMNS,
    MetricReport,
    PairScores,
    SiouConfig,
    binary_iou,
    kendall,
    score_pair,
    spearman,
)

LOGGER = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parent / "templates"
CANDIDATE_SUFFIX = ".png"


def candidate_path(candidates_dir: str | Path, pair_id: str) -> Path:
    return Path(candidates_dir) / f"{pair_id}{CANDIDATE_SUFFIX}"


def _require_candidates(records: Sequence[PairRecord], candidates_dir: str | Path) -> None:
    missing = [r.pair_id for r in records if not candidate_path(candidates_dir, r.pair_id).is_file()]
    if missing:
        raise MissingCandidateError(missing)


def _progress(iterable: Iterable, total: int, desc: str) -> Iterable:
    return tqdm(iterable, total=total, desc=desc, disable=not progress_enabled(), leave=False)


# ---------- EVALUATION ----------

def _score_record(
    record: PairRecord, candidates_dir: Path, cfg: SiouConfig, weights: Sequence[float]
) -> PairScores:
    left = load_image(record.left_path)
    right = load_image(record.right_path)
    gen = load_image(candidate_path(candidates_dir, record.pair_id))
    scores = score_pair(left, right, gen, cfg, weights)
    LOGGER.debug("%s siou=%.4f psnr=%.2f", record.pair_id, scores["siou"], scores["psnr"])
    return PairScores(pair_id=record.pair_id, category=record.category, **scores)


def run_eval(
    manifest: DatasetManifest,
    candidates_dir: str | Path,
    cfg: SiouConfig = DEFAULT_SIOU,
    workers: int | None = None,
    splits: Sequence[str] = ("test",),
    weights: Sequence[float] = BT601_WEIGHTS,
    extra_config: dict[str, Any] | None = None,
) -> MetricReport:
    """Score every record of the selected splits against candidates_dir/<pair_id>.png."""
    cfg.validate()
    records = manifest.select(splits)
    if not records:
        raise EmptyInputError(f"manifest has no records in splits {list(splits)}")
    _require_candidates(records, candidates_dir)

    pool_size = workers if workers and workers > 0 else default_workers()
    directory = Path(candidates_dir)
    LOGGER.info("Evaluating %d pairs from %s with %d workers", len(records), directory, pool_size)

    def job(record: PairRecord) -> PairScores:
        return _score_record(record, directory, cfg, weights)

    if pool_size == 1:
        rows = [job(r) for r in _progress(records, len(records), "eval")]
    else:
        with ThreadPoolExecutor(max_workers=pool_size) as pool:
            rows = list(_progress(pool.map(job, records), len(records), "eval"))

    config = {
        "siou": cfg.to_dict(),
        "grayscale_weights": [float(w) for w in weights],
        "splits": list(splits),
        "candidates_dir": str(directory),
        **(extra_config or {}),
    }
    report = MetricReport.build(rows, config)
    overall = report.aggregates["overall"]
    LOGGER.info("overall siou=%.4f psnr=%.2f ssim=%.4f", overall["siou"], overall["psnr"], overall["ssim"])
    return report


# ---------- HUMAN CORRELATION ----------

@dataclass
class CorrelationTable:
    """Spearman and Kendall of each metric column against mean human scores."""

    table: pd.DataFrame
    pairs: int

    def to_dict(self) -> dict[str, Any]:
        def clean(value: float) -> float | None:
            return None if math.isnan(value) else float(value)

        return {
            "pairs": self.pairs,
            "spearman": {m: clean(v) for m, v in self.table["spearman"].items()},
            "kendall": {m: clean(v) for m, v in self.table["kendall"].items()},
        }


def _rank_pair(metric: np.ndarray, human: np.ndarray, name: str) -> tuple[float, float]:
    try:
        return spearman(metric, human), kendall(metric, human)
    except DegenerateInputError:
        LOGGER.warning("Metric %s is constant over the annotated pairs; correlation undefined", name)
        return math.nan, math.nan


def correlate_with_humans(
    report: MetricReport,
    annotations: AnnotationSet,
    metrics: Sequence[str] = METRIC_COLUMNS,
) -> CorrelationTable:
    """Correlate each metric with annotator-averaged scores; error metrics keep their sign."""
    human = annotations.mean_scores()
    frame = report.to_frame().set_index("pair_id")
    unknown = sorted(set(human.index) - set(frame.index))
    if unknown:
        raise UnknownPairIdError(f"{len(unknown)} annotated pairs are not in the report: {', '.join(unknown[:10])}")

    human_values = human.to_numpy(dtype=np.float64)
    if np.all(human_values == human_values[0]):
        raise DegenerateInputError("human scores are constant; rank correlation is undefined")

    aligned = frame.loc[human.index]
    rows = {}
    for name in metrics:
        values = aligned[name].to_numpy(dtype=np.float64)
        rho, tau = _rank_pair(values, human_values, name)
        rows[name] = {"spearman": rho, "kendall": tau}
    table = pd.DataFrame.from_dict(rows, orient="index", columns=["spearman", "kendall"])
    return CorrelationTable(table=table, pairs=len(human))


# ---------- SIoU SWEEP ----------

@dataclass
class _SweepInputs:
    pair_ids: list[str]
    edge_iou: np.ndarray
    abs_generated: list[np.ndarray]
    abs_reference: list[np.ndarray]


def _sweep_inputs(
    records: Sequence[PairRecord], candidates_dir: str | Path, cfg: SiouConfig, weights: Sequence[float]
) -> _SweepInputs:
    edge, abs_gen, abs_ref = [], [], []
    for record in _progress(records, len(records), "sweep"):
        left = to_grayscale(load_image(record.left_path), weights)
        right_img = load_image(record.right_path)
        gen_img = load_image(candidate_path(candidates_dir, record.pair_id))
        if gen_img.shape != right_img.shape:
            gen_img = resize(gen_img, right_img.shape[1], right_img.shape[0])
        right = to_grayscale(right_img, weights)
        gen = to_grayscale(gen_img, weights)
        edge.append(binary_iou(canny(gen, cfg.canny), canny(right, cfg.canny)))
        abs_gen.append(np.abs(gen - left))
        abs_ref.append(np.abs(right - left))
    return _SweepInputs([r.pair_id for r in records], np.asarray(edge), abs_gen, abs_ref)


@dataclass
class SweepResult:
    table: pd.DataFrame
    best: dict[str, float]


def sweep_siou(
    manifest: DatasetManifest,
    candidates_dir: str | Path,
    annotations: AnnotationSet,
    alphas: Sequence[float] = (0.25, 0.5, 0.7, 0.75, 0.8),
    thresholds: Sequence[float] = (3, 5, 10, 15, 20),
    calibration_fraction: float = 500 / 1100,
    seed: int = 42,
    cfg: SiouConfig = DEFAULT_SIOU,
    weights: Sequence[float] = BT601_WEIGHTS,
) -> SweepResult:
    """Grid-search SIoU's alpha and difference threshold against human ratings.

    Annotated pairs are split (seeded) into a calibration and a validation
    subset. The edge-only (alpha 1) and difference-only (alpha 0) terms are
    always part of the grid. The best row maximizes calibration Spearman.
    """
    human = annotations.mean_scores()
    by_id = manifest.by_id()
    unknown = sorted(set(human.index) - set(by_id))
    if unknown:
        raise UnknownPairIdError(f"{len(unknown)} annotated pairs are not in the manifest: {', '.join(unknown[:10])}")

    records = [by_id[pid] for pid in human.index]
    _require_candidates(records, candidates_dir)
    n_total = len(records)
    n_cal = int(round(n_total * calibration_fraction))
    if n_cal < 2 or n_total - n_cal < 2:
        raise InsufficientRecordsError(
            f"{n_total} annotated pairs cannot form calibration and validation subsets of >= 2 pairs"
        )

    rng = np.random.default_rng(seed)
    order = rng.permutation(n_total)
    subsets = {"calibration": np.sort(order[:n_cal]), "validation": np.sort(order[n_cal:])}

    inputs = _sweep_inputs(records, candidates_dir, cfg, weights)
    scores = human.to_numpy(dtype=np.float64)
    grid_alphas = sorted({float(a) for a in alphas} | {0.0, 1.0})

    rows: list[dict[str, float]] = []
    for threshold in thresholds:
        diff = np.array(
            [binary_iou(g >= threshold, r >= threshold) for g, r in zip(inputs.abs_generated, inputs.abs_reference)]
        )
        for alpha in grid_alphas:
            values = alpha * inputs.edge_iou + (1.0 - alpha) * diff
            row = {"alpha": alpha, "threshold": float(threshold)}
            for label, idx in subsets.items():
                rho, tau = _rank_pair(values[idx], scores[idx], f"siou(alpha={alpha}, threshold={threshold})")
                row[f"{label}_spearman"] = rho
                row[f"{label}_kendall"] = tau
            rows.append(row)

    table = pd.DataFrame(rows)
    if table["calibration_spearman"].isna().all():
        raise DegenerateInputError("every swept setting is constant on the calibration subset")
    best_row = table.loc[table["calibration_spearman"].idxmax()]
    best = {key: float(best_row[key]) for key in table.columns}
    LOGGER.info(
        "Best SIoU setting alpha=%.2f threshold=%g (calibration spearman %.3f, validation %.3f)",
        best["alpha"], best["threshold"], best["calibration_spearman"], best["validation_spearman"],
    )
    return SweepResult(table=table, best=best)


# ---------- HTML REPORT ----------

def _environment() -> Environment:
    env = Environment(
        loader=FileSystemLoader(str(TEMPLATE_DIR)),
        autoescape=select_autoescape(["html"]),
        trim_blocks=True,
        lstrip_blocks=True,
    )
    env.filters["num"] = lambda value, digits=4: f"{float(value):.{digits}f}"
    return env


def render_report_html(
    report: MetricReport,
    path: str | Path,
    correlation: CorrelationTable | None = None,
    title: str = "Stereo conversion benchmark",
) -> Path:
    """Write the summary page: resolved config, per-category means, per-pair table."""
    template = _environment().get_template("report.html")
    categories = {name: stats for name, stats in report.aggregates.items() if name != "overall"}
    html = template.render(
        title=title,
        config=report.config,
        overall=report.aggregates.get("overall"),
        categories=categories,
        metrics=METRIC_COLUMNS,
        rows=report.per_pair,
        correlation=correlation.to_dict() if correlation else None,
    )
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(html, encoding="utf-8")
    LOGGER.info("Wrote HTML report to %s", out_path)
    return out_path


__all__ = [
    "candidate_path",
    "run_eval",
    "CorrelationTable",
    "correlate_with_humans",
    "SweepResult",
    "sweep_siou",
    "render_report_html",
]
