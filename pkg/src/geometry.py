"""Warp stage of two-stage stereo conversion.

Sign convention: a left-view pixel at column x with disparity d lands at
column round(x - d) of the right view (positive disparity moves content left),
i.e. rectified stereo with the right camera translated along +x. Rounding is
half up. Collisions are resolved by a z-buffer on disparity: the larger
disparity is nearer and wins; equal disparities keep the rightmost source.
"""
from __future__ import annotations

from dataclasses import dataclass
import json
import logging
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from PIL import Image as PILImage
from PIL.PngImagePlugin import PngInfo

from src.errors import (
    AllOccludedError,
    DimensionMismatchError,
    InvalidDisparityError,
    NonPositiveParamError,
)
from src.imgcore import BinaryMap, Image, as_image

LOGGER = logging.getLogger(__name__)

DisparityMap = NDArray[np.float64]

DISPARITY_SCALE_KEY = "disparity_scale"
DEFAULT_PNG_SCALE = 256.0


@dataclass(frozen=True)
class WarpResult:
    warped: Image
    occlusion: BinaryMap


def validate_disparity(disp: NDArray, shape: tuple[int, int] | None = None) -> DisparityMap:
    arr = np.asarray(disp, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"disparity must be a 2D map, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionMismatchError(f"disparity shape {arr.shape} does not match image {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise InvalidDisparityError("disparity contains non-finite values")
    if np.any(arr < 0):
        raise InvalidDisparityError(f"disparity must be >= 0, minimum is {arr.min()}")
    if shape is not None and arr.size and arr.max() > shape[1]:
        raise InvalidDisparityError(f"disparity {arr.max()} exceeds the image width {shape[1]}")
    return arr


def depth_to_disparity(
    depth: NDArray, focal_times_baseline: float, min_depth_clamp: float
) -> DisparityMap:
    """d = f*B / max(Z, clamp). Infinite depth maps to zero disparity."""
    if focal_times_baseline <= 0:
        raise NonPositiveParamError(f"focal_times_baseline must be > 0, got {focal_times_baseline}")
    if min_depth_clamp <= 0:
        raise NonPositiveParamError(f"min_depth_clamp must be > 0, got {min_depth_clamp}")
    z = np.asarray(depth, dtype=np.float64)
    if np.any(np.isnan(z)):
        raise InvalidDisparityError("depth contains NaN values")
    return focal_times_baseline / np.maximum(z, min_depth_clamp)


def _target_columns(disp: DisparityMap) -> NDArray[np.int64]:
    columns = np.arange(disp.shape[1], dtype=np.float64)[None, :]
    return np.floor(columns - disp + 0.5).astype(np.int64)


def forward_warp(left: Image, disp: DisparityMap) -> WarpResult:
    """Nearest-splat the left view by its disparity, z-buffered, holes left black."""
    src = as_image(left)
    height, width = src.shape[:2]
    d = validate_disparity(disp, (height, width))

    targets = _target_columns(d)
    rows, cols = np.indices((height, width))
    inside = (targets >= 0) & (targets < width)

    flat_target = (rows * width + targets)[inside]
    flat_source = (rows * width + cols)[inside]
    priority = d[inside]

    # sort by target, then nearest (largest disparity) first, then rightmost source
    order = np.lexsort((-flat_source, -priority, flat_target))
    winners_target, first = np.unique(flat_target[order], return_index=True)
    winners_source = flat_source[order][first]

    warped = np.zeros_like(src)
    occlusion = np.ones((height, width), dtype=bool)
    warped.reshape(-1, 3)[winners_target] = src.reshape(-1, 3)[winners_source]
    occlusion.reshape(-1)[winners_target] = False
    return WarpResult(warped=warped, occlusion=occlusion)


def _nearest_valid_in_rows(valid: NDArray[np.bool_]) -> NDArray[np.int64]:
    """Column index of the nearest valid pixel to the right, else to the left; -1 if none."""
    height, width = valid.shape
    cols = np.broadcast_to(np.arange(width), (height, width))

    right = np.where(valid, cols, width)
    right = np.minimum.accumulate(right[:, ::-1], axis=1)[:, ::-1]
    left = np.where(valid, cols, -1)
    left = np.maximum.accumulate(left, axis=1)

    return np.where(right < width, right, left)


def _nearest_valid_in_cols(valid: NDArray[np.bool_]) -> NDArray[np.int64]:
    """Row index of the nearest valid pixel in each column (upper wins ties); -1 if the column is empty."""
    height, width = valid.shape
    rows = np.broadcast_to(np.arange(height)[:, None], (height, width))

    above = np.maximum.accumulate(np.where(valid, rows, -1), axis=0)
    below = np.where(valid, rows, height)
    below = np.minimum.accumulate(below[::-1], axis=0)[::-1]

    dist_above = np.where(above >= 0, rows - above, np.iinfo(np.int64).max)
    dist_below = np.where(below < height, below - rows, np.iinfo(np.int64).max)
    return np.where(dist_above <= dist_below, above, np.where(below < height, below, -1))


def fill_occlusions_nearest(result: WarpResult) -> Image:
    """Fill holes from the nearest valid pixel in the row (rightward first, then leftward).

    Rows without any valid pixel take the nearest valid pixel in each column; columns
    with no valid pixel at all then borrow along the row the same way.
    """
    warped = as_image(result.warped)
    valid = ~np.asarray(result.occlusion, dtype=bool)
    if not valid.any():
        raise AllOccludedError("every pixel is occluded; nothing to fill from")
    if valid.all():
        return warped.copy()

    source_cols = _nearest_valid_in_rows(valid)
    filled = warped.copy()
    row_has_data = source_cols[:, 0] >= 0
    rows = np.nonzero(row_has_data)[0]
    filled[rows] = np.take_along_axis(warped[rows], source_cols[rows][:, :, None], axis=1)

    empty_rows = np.nonzero(~row_has_data)[0]
    if empty_rows.size:
        source_rows = _nearest_valid_in_cols(valid)
        col_has_data = valid.any(axis=0)
        cols = np.nonzero(col_has_data)[0]
        fallback_cols = _nearest_valid_in_rows(col_has_data[None, :])[0]
        for row in empty_rows:
            filled[row, cols] = warped[source_rows[row, cols], cols]
            filled[row] = filled[row, fallback_cols]
        LOGGER.debug("Filled %d fully occluded rows column-wise", empty_rows.size)
    return filled


def two_stage_convert(
    left: Image, depth: NDArray, focal_times_baseline: float, min_depth_clamp: float = 1e-3
) -> Image:
    """Depth -> disparity -> forward warp -> nearest fill: the non-learned two-stage baseline."""
    disp = depth_to_disparity(depth, focal_times_baseline, min_depth_clamp)
    return fill_occlusions_nearest(forward_warp(left, disp))


# ---------- DISPARITY FILES ----------

def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def save_disparity(path: str | Path, disp: NDArray, scale: float = DEFAULT_PNG_SCALE) -> Path:
    """Write a disparity map as 16-bit PNG (scale in a text chunk) or as raw .f32 + JSON sidecar."""
    d = validate_disparity(disp)
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    if out_path.suffix.lower() == ".f32":
        d.astype("<f4").tofile(out_path)
        header = {"height": int(d.shape[0]), "width": int(d.shape[1])}
        _sidecar(out_path).write_text(json.dumps(header), encoding="utf-8")
        return out_path

    if scale <= 0:
        raise NonPositiveParamError(f"disparity scale must be > 0, got {scale}")
    encoded = np.floor(d * scale + 0.5)
    if encoded.max(initial=0) > np.iinfo(np.uint16).max:
        raise InvalidDisparityError(
            f"disparity {d.max():.2f} does not fit 16 bits at scale {scale}; use a .f32 file"
        )
    info = PngInfo()
    info.add_text(DISPARITY_SCALE_KEY, repr(float(scale)))
    PILImage.fromarray(encoded.astype(np.uint16)).save(out_path, pnginfo=info)
    return out_path


def load_disparity(path: str | Path) -> DisparityMap:
    disp_path = Path(path)
    if disp_path.suffix.lower() == ".f32":
        header = json.loads(_sidecar(disp_path).read_text(encoding="utf-8"))
        raw = np.fromfile(disp_path, dtype="<f4")
        expected = int(header["height"]) * int(header["width"])
        if raw.size != expected:
            raise DimensionMismatchError(f"{disp_path} holds {raw.size} values, header declares {expected}")
        return validate_disparity(raw.reshape(int(header["height"]), int(header["width"])).astype(np.float64))

    with PILImage.open(disp_path) as pil:
        scale = float(pil.info.get(DISPARITY_SCALE_KEY, DEFAULT_PNG_SCALE))
        data = np.asarray(pil, dtype=np.float64)
    if data.ndim != 2:
        raise DimensionMismatchError(f"{disp_path} is not a single-channel disparity PNG")
    return validate_disparity(data / scale)


__all__ = [
    "DisparityMap",
    "WarpResult",
    "validate_disparity",
    "depth_to_disparity",
    "forward_warp",
    "fill_occlusions_nearest",
    "two_stage_convert",
    "save_disparity",
    "load_disparity",
]
