"""Raster types, conversions and renderings shared by every other module.

Images are numpy arrays:

  Image      float64, shape (H, W, 3), RGB intensities in [0, 255]
  GrayImage  float64, shape (H, W), luminance in [0, 255]
  BinaryMap  bool, shape (H, W)

Arithmetic happens on real values; quantization to 8-bit (round half up) only
happens in save_image.
"""
from __future__ import annotations

from pathlib import Path
import logging
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from PIL import Image as PILImage
from scipy import ndimage

from src.errors import DimensionMismatchError, OddWidthError, ZeroDimensionError

LOGGER = logging.getLogger(__name__)

Image = NDArray[np.float64]
GrayImage = NDArray[np.float64]
BinaryMap = NDArray[np.bool_]

BT601_WEIGHTS: tuple[float, float, float] = (0.299, 0.587, 0.114)


def as_image(data: NDArray) -> Image:
    """Validate and promote an (H, W, 3) array to a float64 Image."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionMismatchError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ZeroDimensionError(f"image has a zero dimension: {arr.shape}")
    return arr


def as_gray(data: NDArray) -> GrayImage:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"expected an (H, W) grayscale image, got shape {arr.shape}")
    if arr.size == 0:
        raise ZeroDimensionError(f"grayscale image has a zero dimension: {arr.shape}")
    return arr


def require_same_shape(*arrays: NDArray) -> None:
    shapes = {a.shape for a in arrays}
    if len(shapes) > 1:
        raise DimensionMismatchError(f"dimension mismatch: {sorted(shapes)}")


def to_grayscale(img: Image, weights: Sequence[float] = BT601_WEIGHTS) -> GrayImage:
    """Per-pixel luminance as a weighted sum of R, G and B."""
    rgb = as_image(img)
    w = np.asarray(weights, dtype=np.float64)
    return np.clip(rgb @ w, 0.0, 255.0)


def gray_to_rgb(gray: GrayImage) -> Image:
    g = as_gray(gray)
    return np.repeat(g[:, :, None], 3, axis=2)


def split_side_by_side(frame: Image) -> tuple[Image, Image]:
    """Split an SBS frame down the middle into (left view, right view)."""
    rgb = as_image(frame)
    width = rgb.shape[1]
    if width % 2:
        raise OddWidthError(f"side-by-side frame width must be even, got {width}")
    half = width // 2
    return rgb[:, :half].copy(), rgb[:, half:].copy()


def concat_side_by_side(left: Image, right: Image) -> Image:
    l_img, r_img = as_image(left), as_image(right)
    if l_img.shape[0] != r_img.shape[0]:
        raise DimensionMismatchError(
            f"views must share a height to be joined: {l_img.shape[0]} vs {r_img.shape[0]}"
        )
    return np.concatenate([l_img, r_img], axis=1)


def resize(img: Image, new_w: int, new_h: int) -> Image:
    """Bilinear resize with pixel-center-aligned sampling and replicated borders."""
    if new_w < 1 or new_h < 1:
        raise ZeroDimensionError(f"target size must be at least 1x1, got {new_w}x{new_h}")
    rgb = as_image(img)
    height, width = rgb.shape[:2]
    if (width, height) == (new_w, new_h):
        return rgb.copy()

    rows = (np.arange(new_h, dtype=np.float64) + 0.5) * (height / new_h) - 0.5
    cols = (np.arange(new_w, dtype=np.float64) + 0.5) * (width / new_w) - 0.5
    grid = np.meshgrid(rows, cols, indexing="ij")
    out = np.empty((new_h, new_w, 3), dtype=np.float64)
    for channel in range(3):
        out[:, :, channel] = ndimage.map_coordinates(rgb[:, :, channel], grid, order=1, mode="nearest")
    return out


def render_anaglyph(left: Image, right: Image) -> Image:
    """Red-cyan composite: red from the left view, green and blue from the right."""
    l_img, r_img = as_image(left), as_image(right)
    require_same_shape(l_img, r_img)
    out = r_img.copy()
    out[:, :, 0] = l_img[:, :, 0]
    return out


def diff_heatmap(a: GrayImage, b: GrayImage) -> GrayImage:
    ga, gb = as_gray(a), as_gray(b)
    require_same_shape(ga, gb)
    return np.abs(ga - gb)


def colorize_heatmap(diff: GrayImage) -> Image:
    """Black-to-red ramp: brighter red means a larger difference."""
    g = np.clip(as_gray(diff), 0.0, 255.0)
    out = np.zeros(g.shape + (3,), dtype=np.float64)
    out[:, :, 0] = g
    return out


# ---------- FILE I/O ----------

def quantize(arr: NDArray) -> NDArray[np.uint8]:
    """Round half up and clamp to 8-bit."""
    return np.clip(np.floor(np.asarray(arr, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def load_image(path: str | Path) -> Image:
    """Load a PNG/JPEG as an RGB Image; alpha channels are dropped."""
    image_path = Path(path)
    with PILImage.open(image_path) as pil:
        has_alpha = pil.mode in ("RGBA", "LA", "PA") or (pil.mode == "P" and "transparency" in pil.info)
        if has_alpha:
            LOGGER.warning("Dropping alpha channel from %s", image_path)
        rgb = pil.convert("RGB")
        return np.asarray(rgb, dtype=np.float64)


def save_image(path: str | Path, data: NDArray) -> Path:
    """Write an Image, GrayImage or BinaryMap as an 8-bit RGB file (format from suffix)."""
    arr = np.asarray(data)
    if arr.dtype == np.bool_:
        arr = arr.astype(np.float64) * 255.0
    if arr.ndim == 2:
        arr = gray_to_rgb(arr)
    rgb = quantize(as_image(arr))

    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(rgb).save(out_path)
    return out_path


__all__ = [
    "Image",
    "GrayImage",
    "BinaryMap",
    "BT601_WEIGHTS",
    "as_image",
    "as_gray",
    "require_same_shape",
    "to_grayscale",
    "gray_to_rgb",
    "split_side_by_side",
    "concat_side_by_side",
    "resize",
    "render_anaglyph",
    "diff_heatmap",
    "colorize_heatmap",
    "quantize",
    "load_image",
    "save_image",
]
