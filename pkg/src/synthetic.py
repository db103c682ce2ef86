"""Self-contained synthetic stereo benchmark.

Each scene is a value-noise textured background at infinite depth (zero
disparity) with one to three flat-shaded rectangles or ellipses in front of it,
each at a constant integer disparity. The right view is rendered layer by
layer, so background revealed next to a shape keeps its true texture. Pixel
values are integers, so PNG round trips are exact.
"""
from __future__ import annotations

from dataclasses import dataclass
import logging
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage
from tqdm import tqdm

from src.config import progress_enabled
from src.dataset import DatasetManifest, PairRecord, read_manifest, write_manifest
from src.errors import InvalidParamsError, NonPositiveParamError
from src.geometry import (
    DisparityMap,
    depth_to_disparity,
    fill_occlusions_nearest,
    forward_warp,
    save_disparity,
)
from src.imgcore import Image, save_image

LOGGER = logging.getLogger(__name__)

FOCAL_TIMES_BASELINE = 240.0
MIN_DEPTH_CLAMP = 1e-3

SLOT_WIDTH = 64
SLOT_MARGIN = 24
SHAPE_WIDTHS = (28, 40)
SHAPE_HEIGHTS = (28, 56)
SHAPE_DISPARITIES = (6, 12)

# Background luminance stays in [100, 150]; shapes sit at least 90 levels away.
BACKGROUND_RANGE = (100.0, 150.0)
BRIGHT_RANGE = (240.0, 250.0)
DARK_RANGE = (5.0, 15.0)
NOISE_OCTAVES = ((24, 0.5), (12, 0.3), (6, 0.2))

CANDIDATE_KINDS = ("idm", "warp", "scaled")


@dataclass(frozen=True)
class SyntheticPair:
    pair_id: str
    category: str
    left: Image
    right: Image
    disparity: DisparityMap
    depth: NDArray[np.float64]


def _value_noise(rng: np.random.Generator, height: int, width: int) -> NDArray[np.float64]:
    """Sum of bilinearly upsampled random lattices, normalized to [0, 1]."""
    total = np.zeros((height, width))
    for cell, weight in NOISE_OCTAVES:
        lattice = rng.uniform(size=(height // cell + 2, width // cell + 2))
        total += weight * ndimage.zoom(lattice, cell, order=1, mode="nearest")[:height, :width]
    span = total.max() - total.min()
    return (total - total.min()) / span if span > 0 else np.zeros_like(total)


def _background(rng: np.random.Generator, height: int, width: int) -> Image:
    low, high = BACKGROUND_RANGE
    tint = rng.uniform(-0.1, 0.1, size=3)
    channels = [_value_noise(rng, height, width) for _ in range(3)]
    base = _value_noise(rng, height, width)
    planes = [np.clip(0.8 * base + 0.2 * c + t, 0.0, 1.0) for c, t in zip(channels, tint)]
    return np.floor(low + (high - low) * np.stack(planes, axis=2) + 0.5)


def _shape_mask(rng: np.random.Generator, height: int, width: int, x0: int, y0: int, w: int, h: int) -> NDArray[np.bool_]:
    mask = np.zeros((height, width), dtype=bool)
    if rng.random() < 0.5:
        mask[y0 : y0 + h, x0 : x0 + w] = True
        return mask
    rows, cols = np.ogrid[:height, :width]
    cy, cx = y0 + (h - 1) / 2.0, x0 + (w - 1) / 2.0
    return ((rows - cy) / (h / 2.0)) ** 2 + ((cols - cx) / (w / 2.0)) ** 2 <= 1.0


def _shape_color(rng: np.random.Generator) -> NDArray[np.float64]:
    low, high = BRIGHT_RANGE if rng.random() < 0.5 else DARK_RANGE
    return np.floor(rng.uniform(low, high, size=3) + 0.5)


def _shift_left(mask: NDArray[np.bool_], d: int) -> NDArray[np.bool_]:
    shifted = np.zeros_like(mask)
    shifted[:, : mask.shape[1] - d] = mask[:, d:]
    return shifted


def make_scene(rng: np.random.Generator, width: int = 192, height: int = 96, pair_id: str = "synth-0000") -> SyntheticPair:
    """One layered stereo scene with exact right view, disparity and depth."""
    slots = width // SLOT_WIDTH
    if slots < 1 or height < SHAPE_HEIGHTS[1] + 16:
        raise InvalidParamsError(f"scene of {width}x{height} is too small for the shape layout")

    left = _background(rng, height, width)
    right = left.copy()
    disparity = np.zeros((height, width))

    count = int(rng.integers(1, min(3, slots) + 1))
    for slot in sorted(rng.choice(slots, size=count, replace=False)):
        w = int(rng.integers(SHAPE_WIDTHS[0], SHAPE_WIDTHS[1] + 1))
        h = int(rng.integers(SHAPE_HEIGHTS[0], SHAPE_HEIGHTS[1] + 1))
        d = int(rng.integers(SHAPE_DISPARITIES[0], SHAPE_DISPARITIES[1] + 1))
        start = int(slot) * SLOT_WIDTH
        x0 = start + int(rng.integers(SLOT_MARGIN, SLOT_WIDTH - w + 1))
        y0 = int(rng.integers(8, height - h - 8 + 1))

        mask = _shape_mask(rng, height, width, x0, y0, w, h)
        color = _shape_color(rng)
        left[mask] = color
        right[_shift_left(mask, d)] = color
        disparity[mask] = d

    depth = np.where(disparity > 0, FOCAL_TIMES_BASELINE / np.maximum(disparity, 1e-12), np.inf)
    return SyntheticPair(
        pair_id=pair_id,
        category="simple" if count == 1 else "complex",
        left=left,
        right=right,
        disparity=disparity,
        depth=depth,
    )


def make_candidate(pair: SyntheticPair, kind: str, gain: float = 3.0) -> Image:
    """Generated right view for a scene.

    idm     the left view itself
    warp    two-stage conversion from depth with the baseline scaled by gain
    scaled  warp of the true disparity multiplied by gain (0 gives the left view)
    """
    if kind == "idm":
        return pair.left.copy()
    if kind == "warp":
        if gain <= 0:
            raise NonPositiveParamError(f"warp gain must be > 0, got {gain}")
        disp = depth_to_disparity(pair.depth, FOCAL_TIMES_BASELINE * gain, MIN_DEPTH_CLAMP)
    elif kind == "scaled":
        if gain < 0:
            raise NonPositiveParamError(f"disparity scale must be >= 0, got {gain}")
        disp = pair.disparity * gain
    else:
        raise InvalidParamsError(f"unknown candidate kind {kind!r}; expected one of {CANDIDATE_KINDS}")
    return fill_occlusions_nearest(forward_warp(pair.left, disp))


def ladder_dir_name(scale: float) -> str:
    return f"ladder_{float(scale):g}"


def write_benchmark(
    out_dir: str | Path,
    pairs: int = 20,
    seed: int = 42,
    ladder: Sequence[float] = (1.0, 0.75, 0.5, 0.25, 0.0),
    gain: float = 3.0,
    width: int = 192,
    height: int = 96,
) -> DatasetManifest:
    """Write scenes, ground truth, candidate folders and manifest.jsonl under out_dir."""
    if pairs < 1:
        raise InvalidParamsError(f"pairs must be >= 1, got {pairs}")
    root = Path(out_dir)
    rng = np.random.default_rng(seed)

    records: list[PairRecord] = []
    for index in tqdm(range(pairs), desc="synth", disable=not progress_enabled(), leave=False):
        pair = make_scene(rng, width, height, pair_id=f"synth-{index:04d}")
        save_image(root / "pairs" / f"{pair.pair_id}_L.png", pair.left)
        save_image(root / "pairs" / f"{pair.pair_id}_R.png", pair.right)
        save_disparity(root / "disparity" / f"{pair.pair_id}.png", pair.disparity)

        save_image(root / "idm" / f"{pair.pair_id}.png", make_candidate(pair, "idm"))
        save_image(root / "warp" / f"{pair.pair_id}.png", make_candidate(pair, "warp", gain))
        for scale in ladder:
            save_image(root / ladder_dir_name(scale) / f"{pair.pair_id}.png", make_candidate(pair, "scaled", scale))

        records.append(
            PairRecord(
                pair_id=pair.pair_id,
                left_path=f"pairs/{pair.pair_id}_L.png",
                right_path=f"pairs/{pair.pair_id}_R.png",
                category=pair.category,
                split="test",
                source_id=pair.pair_id,
                frame_index=0,
                disparity_path=f"disparity/{pair.pair_id}.png",
            )
        )

    manifest_path = write_manifest(root / "manifest.jsonl", DatasetManifest(records=records))
    LOGGER.info("Synthetic benchmark with %d pairs written to %s", pairs, root)
    return read_manifest(manifest_path)


__all__ = [
    "SyntheticPair",
    "make_scene",
    "make_candidate",
    "ladder_dir_name",
    "write_benchmark",
    "FOCAL_TIMES_BASELINE",
]
