"""Stereo and image quality metrics, rank correlations and the metric report."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
import json
import logging
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from scipy import ndimage
from scipy.stats import rankdata

from src.edges import CannyParams, DEFAULT_CANNY, canny
from src.errors import (
    DegenerateInputError,
    DimensionMismatchError,
    InvalidParamsError,
    LengthMismatchError,
    ReportError,
    TooSmallError,
)
from src.imgcore import (
    BT601_WEIGHTS,
    BinaryMap,
    GrayImage,
    Image,
    as_gray,
    as_image,
    require_same_shape,
    resize,
    to_grayscale,
)

LOGGER = logging.getLogger(__name__)

PEAK_VALUE = 255.0

SSIM_SIGMA = 1.5
SSIM_TRUNCATE = 3.5  # 11x11 window at sigma 1.5
SSIM_WINDOW = 11
SSIM_C1 = (0.01 * PEAK_VALUE) ** 2
SSIM_C2 = (0.03 * PEAK_VALUE) ** 2

METRIC_COLUMNS: tuple[str, ...] = ("siou", "edge_iou", "diff_iou", "rmse", "psnr", "ssim")


@dataclass(frozen=True)
class SiouConfig:
    alpha: float = 0.75
    diff_threshold: float = 5.0
    canny: CannyParams = DEFAULT_CANNY

    def validate(self) -> "SiouConfig":
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidParamsError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.diff_threshold <= 255.0:
            raise InvalidParamsError(f"diff_threshold must lie in [0, 255], got {self.diff_threshold}")
        self.canny.validate()
        return self

    def to_dict(self) -> dict[str, Any]:
        return {
            "alpha": float(self.alpha),
            "diff_threshold": float(self.diff_threshold),
            "canny": self.canny.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SiouConfig":
        return cls(
            alpha=float(data.get("alpha", cls.alpha)),
            diff_threshold=float(data.get("diff_threshold", cls.diff_threshold)),
            canny=CannyParams.from_dict(data.get("canny") or {}),
        ).validate()


DEFAULT_SIOU = SiouConfig()


@dataclass(frozen=True)
class SiouResult:
    siou: float
    edge_iou: float
    diff_iou: float


# ---------- IoU TERMS ----------

def binary_iou(a: BinaryMap, b: BinaryMap) -> float:
    """|a & b| / |a | b|; two empty maps count as identical (1.0)."""
    ma, mb = np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)
    require_same_shape(ma, mb)
    union = np.count_nonzero(ma | mb)
    if union == 0:
        return 1.0
    return np.count_nonzero(ma & mb) / union


def diff_iou(left: GrayImage, right: GrayImage, gen: GrayImage, threshold: float) -> float:
    """IoU of the thresholded |gen - left| and |right - left| maps."""
    gl, gr, gg = as_gray(left), as_gray(right), as_gray(gen)
    require_same_shape(gl, gr, gg)
    generated_mask = np.abs(gg - gl) >= threshold
    reference_mask = np.abs(gr - gl) >= threshold
    return binary_iou(generated_mask, reference_mask)


def siou(left: GrayImage, right: GrayImage, gen: GrayImage, cfg: SiouConfig = DEFAULT_SIOU) -> SiouResult:
    cfg.validate()
    gl, gr, gg = as_gray(left), as_gray(right), as_gray(gen)
    require_same_shape(gl, gr, gg)
    edge = binary_iou(canny(gg, cfg.canny), canny(gr, cfg.canny))
    disparity = diff_iou(gl, gr, gg, cfg.diff_threshold)
    return SiouResult(
        siou=cfg.alpha * edge + (1.0 - cfg.alpha) * disparity,
        edge_iou=edge,
        diff_iou=disparity,
    )


# ---------- IMAGE QUALITY ----------

def rmse(a: Image, b: Image) -> float:
    """Root mean squared difference over every pixel and channel, 0-255 scale."""
    xa, xb = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if xa.shape != xb.shape:
        raise DimensionMismatchError(f"dimension mismatch: {xa.shape} vs {xb.shape}")
    return float(np.sqrt(np.mean((xa - xb) ** 2)))


def psnr_from_rmse(value: float, peak: float = PEAK_VALUE) -> float:
    if value == 0:
        return math.inf
    return 20.0 * math.log10(peak / value)


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give +inf."""
    return psnr_from_rmse(rmse(a, b))


def ssim(a: GrayImage, b: GrayImage) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5) over valid window positions."""
    x, y = as_gray(a), as_gray(b)
    require_same_shape(x, y)
    if min(x.shape) < SSIM_WINDOW:
        raise TooSmallError(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {x.shape}")

    def blur(arr: NDArray) -> NDArray:
        return ndimage.gaussian_filter(arr, sigma=SSIM_SIGMA, truncate=SSIM_TRUNCATE, mode="reflect")

    mu_x, mu_y = blur(x), blur(y)
    var_x = blur(x * x) - mu_x * mu_x
    var_y = blur(y * y) - mu_y * mu_y
    cov = blur(x * y) - mu_x * mu_y

    numerator = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
    denominator = (mu_x**2 + mu_y**2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
    ssim_map = numerator / denominator

    pad = (SSIM_WINDOW - 1) // 2
    return float(ssim_map[pad:-pad, pad:-pad].mean())


# ---------- RANK CORRELATION ----------

def _paired(x: Sequence[float], y: Sequence[float]) -> tuple[NDArray, NDArray]:
    ax = np.asarray(x, dtype=np.float64).ravel()
    ay = np.asarray(y, dtype=np.float64).ravel()
    if ax.size != ay.size:
        raise LengthMismatchError(f"length mismatch: {ax.size} vs {ay.size}")
    if ax.size < 2:
        raise LengthMismatchError(f"rank correlation needs at least 2 observations, got {ax.size}")
    if np.all(ax == ax[0]) or np.all(ay == ay[0]):
        raise DegenerateInputError("rank correlation is undefined for a constant input")
    return ax, ay


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average-ranked data."""
    ax, ay = _paired(x, y)
    rx = rankdata(ax, method="average")
    ry = rankdata(ay, method="average")
    rx -= rx.mean()
    ry -= ry.mean()
    return float(np.dot(rx, ry) / math.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))


def kendall(x: Sequence[float], y: Sequence[float]) -> float:
    """Kendall tau-b with tie correction, from exact pair counts."""
    ax, ay = _paired(x, y)
    upper = np.triu_indices(ax.size, k=1)
    sx = np.sign(ax[:, None] - ax[None, :])[upper]
    sy = np.sign(ay[:, None] - ay[None, :])[upper]
    balance = int(np.sum(sx * sy))  # concordant - discordant
    untied_x = int(np.count_nonzero(sx))
    untied_y = int(np.count_nonzero(sy))
    return balance / math.sqrt(untied_x * untied_y)


# ---------- PER-PAIR SCORING & REPORT ----------

def score_pair(
    left: Image,
    right: Image,
    gen: Image,
    cfg: SiouConfig = DEFAULT_SIOU,
    weights: Sequence[float] = BT601_WEIGHTS,
) -> dict[str, float]:
    """All metrics for one (left, right, generated) triple.

    The generated view is first resampled to the ground-truth resolution.
    """
    l_img, r_img, g_img = as_image(left), as_image(right), as_image(gen)
    require_same_shape(l_img, r_img)
    height, width = r_img.shape[:2]
    if g_img.shape != r_img.shape:
        g_img = resize(g_img, width, height)

    gray_l = to_grayscale(l_img, weights)
    gray_r = to_grayscale(r_img, weights)
    gray_g = to_grayscale(g_img, weights)

    stereo = siou(gray_l, gray_r, gray_g, cfg)
    error = rmse(g_img, r_img)
    return {
        "siou": stereo.siou,
        "edge_iou": stereo.edge_iou,
        "diff_iou": stereo.diff_iou,
        "rmse": error,
        "psnr": psnr_from_rmse(error),
        "ssim": ssim(gray_g, gray_r),
    }


@dataclass
class PairScores:
    pair_id: str
    category: str
    siou: float
    edge_iou: float
    diff_iou: float
    rmse: float
    psnr: float
    ssim: float


@dataclass
class MetricReport:
    per_pair: list[PairScores]
    aggregates: dict[str, dict[str, float]]
    config: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def build(cls, per_pair: Iterable[PairScores], config: dict[str, Any]) -> "MetricReport":
        rows = sorted(per_pair, key=lambda item: item.pair_id)
        return cls(per_pair=rows, aggregates=aggregate(rows), config=config)

    def to_frame(self) -> pd.DataFrame:
        columns = ["pair_id", "category", *METRIC_COLUMNS]
        return pd.DataFrame([asdict(row) for row in self.per_pair], columns=columns)

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "per_pair": [asdict(row) for row in self.per_pair],
            "aggregates": self.aggregates,
        }
        return json.dumps(payload, indent=2, sort_keys=False)

    def write(self, path: str | Path) -> Path:
        out_path = Path(path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(self.to_json(), encoding="utf-8")
        return out_path

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        try:
            payload = json.loads(text)
            if not isinstance(payload, dict):
                raise ReportError("report root must be a JSON object")
            rows = [PairScores(**row) for row in payload["per_pair"]]
        except json.JSONDecodeError as exc:
            raise ReportError(f"malformed report JSON: {exc}") from exc
        except (KeyError, TypeError) as exc:
            raise ReportError(f"report is missing or has unexpected fields: {exc}") from exc
        return cls(per_pair=rows, aggregates=payload.get("aggregates", {}), config=payload.get("config", {}))

    @classmethod
    def read(cls, path: str | Path) -> "MetricReport":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def aggregate(rows: Sequence[PairScores]) -> dict[str, dict[str, float]]:
    """Arithmetic means per category plus an "overall" bucket."""
    if not rows:
        return {}
    frame = pd.DataFrame([asdict(row) for row in rows])
    metrics = list(METRIC_COLUMNS)

    def summarize(group: pd.DataFrame) -> dict[str, float]:
        means = {name: float(group[name].mean()) for name in metrics}
        means["count"] = int(len(group))
        return means

    result = {"overall": summarize(frame)}
    for category, group in frame.groupby("category", sort=True):
        result[str(category)] = summarize(group)
    return result


__all__ = [
    "SiouConfig",
    "SiouResult",
    "DEFAULT_SIOU",
    "METRIC_COLUMNS",
    "binary_iou",
    "diff_iou",
    "siou",
    "rmse",
    "psnr",
    "psnr_from_rmse",
    "ssim",
    "spearman",
    "kendall",
    "score_pair",
    "PairScores",
    "MetricReport",
    "aggregate",
]
