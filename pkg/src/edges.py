"""Edge extraction: Sobel gradients (and their adjoint) plus a Canny detector.

All filters use replicate border padding. Sobel accepts a single (H, W) plane
or a stack of planes (C, H, W); stacks are filtered per plane.
"""
from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from src.errors import EmptyInputError, InvalidParamsError, ShapeMismatchError
from src.imgcore import BinaryMap, GrayImage, as_gray

LOGGER = logging.getLogger(__name__)

SOBEL_X = np.array(
    [
        [-1.0, 0.0, 1.0],
        [-2.0, 0.0, 2.0],
        [-1.0, 0.0, 1.0],
    ]
)
SOBEL_Y = SOBEL_X.T.copy()


@dataclass(frozen=True)
class GradientField:
    gx: NDArray[np.float64]
    gy: NDArray[np.float64]

    @property
    def magnitude(self) -> NDArray[np.float64]:
        return np.hypot(self.gx, self.gy)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.gx.shape


@dataclass(frozen=True)
class CannyParams:
    gaussian_sigma: float = 1.4
    low_threshold: float = 50.0
    high_threshold: float = 150.0
    kernel_size: int = 5

    def validate(self) -> "CannyParams":
        if not self.gaussian_sigma > 0:
            raise InvalidParamsError(f"gaussian_sigma must be > 0, got {self.gaussian_sigma}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise InvalidParamsError(f"kernel_size must be a positive odd integer, got {self.kernel_size}")
        for name in ("low_threshold", "high_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 255.0:
                raise InvalidParamsError(f"{name} must lie in [0, 255], got {value}")
        if self.low_threshold > self.high_threshold:
            raise InvalidParamsError(
                f"low_threshold ({self.low_threshold}) exceeds high_threshold ({self.high_threshold})"
            )
        return self

    def to_dict(self) -> dict[str, float]:
        return {
            "gaussian_sigma": float(self.gaussian_sigma),
            "low_threshold": float(self.low_threshold),
            "high_threshold": float(self.high_threshold),
            "kernel_size": int(self.kernel_size),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CannyParams":
        return cls(
            gaussian_sigma=float(data.get("gaussian_sigma", data.get("sigma", cls.gaussian_sigma))),
            low_threshold=float(data.get("low_threshold", cls.low_threshold)),
            high_threshold=float(data.get("high_threshold", cls.high_threshold)),
            kernel_size=int(data.get("kernel_size", cls.kernel_size)),
        ).validate()


DEFAULT_CANNY = CannyParams()


def _planes(field: NDArray) -> NDArray[np.float64]:
    arr = np.asarray(field, dtype=np.float64)
    if arr.ndim not in (2, 3):
        raise EmptyInputError(f"expected an (H, W) or (C, H, W) array, got shape {arr.shape}")
    if arr.size == 0:
        raise EmptyInputError("cannot filter an empty array")
    return arr


def _kernel_for(arr: NDArray, kernel: NDArray) -> NDArray:
    return kernel if arr.ndim == 2 else kernel[None, :, :]


def sobel(field: NDArray) -> GradientField:
    """3x3 Sobel gradients; a unit ramp along x gives gx = 8 in the interior."""
    arr = _planes(field)
    gx = ndimage.correlate(arr, _kernel_for(arr, SOBEL_X), mode="nearest")
    gy = ndimage.correlate(arr, _kernel_for(arr, SOBEL_Y), mode="nearest")
    return GradientField(gx=gx, gy=gy)


def _replicate_pad_adjoint(padded: NDArray) -> NDArray:
    """Fold a one-pixel replicate border back onto the edge rows and columns."""
    rows = padded[..., 1:-1, :].copy()
    rows[..., 0, :] += padded[..., 0, :]
    rows[..., -1, :] += padded[..., -1, :]
    out = rows[..., :, 1:-1].copy()
    out[..., :, 0] += rows[..., :, 0]
    out[..., :, -1] += rows[..., :, -1]
    return out


def sobel_adjoint(gx: NDArray, gy: NDArray) -> NDArray[np.float64]:
    """Adjoint of sobel: <sobel(f), (gx, gy)> == <f, sobel_adjoint(gx, gy)>."""
    ax, ay = _planes(gx), _planes(gy)
    if ax.shape != ay.shape:
        raise ShapeMismatchError(f"gradient planes disagree in shape: {ax.shape} vs {ay.shape}")
    pad = [(0, 0)] * (ax.ndim - 2) + [(1, 1), (1, 1)]
    total = sum(
        ndimage.correlate(np.pad(grad, pad), _kernel_for(ax, kernel[::-1, ::-1]), mode="constant", cval=0.0)
        for grad, kernel in ((ax, SOBEL_X), (ay, SOBEL_Y))
    )
    return _replicate_pad_adjoint(total)


def gaussian_kernel1d(sigma: float, kernel_size: int) -> NDArray[np.float64]:
    radius = kernel_size // 2
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return weights / weights.sum()


def gaussian_blur(field: NDArray, sigma: float, kernel_size: int) -> NDArray[np.float64]:
    arr = _planes(field)
    weights = gaussian_kernel1d(sigma, kernel_size)
    blurred = ndimage.correlate1d(arr, weights, axis=-1, mode="nearest")
    return ndimage.correlate1d(blurred, weights, axis=-2, mode="nearest")


# Quantized gradient directions, each with the offset (drow, dcol) of the
# neighbour lying along the gradient.
_DIRECTIONS: tuple[tuple[int, int], ...] = ((0, 1), (1, 1), (1, 0), (1, -1))


def _direction_bins(gx: NDArray, gy: NDArray) -> NDArray[np.int8]:
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    bins = np.floor((angle + 22.5) / 45.0).astype(np.int8) % 4
    return bins


def _shifted(padded: NDArray, drow: int, dcol: int, shape: tuple[int, int]) -> NDArray:
    h, w = shape
    return padded[1 + drow : 1 + drow + h, 1 + dcol : 1 + dcol + w]


def non_maximum_suppression(grad: GradientField) -> NDArray[np.bool_]:
    """Thin ridges along the 4-bin quantized gradient direction.

    A pixel survives when it is strictly larger than the neighbour behind it and
    not smaller than the neighbour ahead of it, so plateaus of width two keep
    exactly one pixel.
    """
    mag = grad.magnitude
    bins = _direction_bins(grad.gx, grad.gy)
    padded = np.pad(mag, 1, mode="constant", constant_values=0.0)
    keep = np.zeros(mag.shape, dtype=bool)
    for index, (drow, dcol) in enumerate(_DIRECTIONS):
        ahead = _shifted(padded, drow, dcol, mag.shape)
        behind = _shifted(padded, -drow, -dcol, mag.shape)
        keep |= (bins == index) & (mag > behind) & (mag >= ahead)
    return keep & (mag > 0)


def hysteresis(magnitude: NDArray, candidates: NDArray[np.bool_], low: float, high: float) -> BinaryMap:
    weak = candidates & (magnitude >= low)
    strong = weak & (magnitude >= high)
    if not strong.any():
        return np.zeros(magnitude.shape, dtype=bool)
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    seeded = np.unique(labels[strong])
    seeded = seeded[seeded > 0]
    return np.isin(labels, seeded)


def canny(gray: GrayImage, params: CannyParams = DEFAULT_CANNY) -> BinaryMap:
    """Gaussian blur, Sobel, 4-bin NMS and 8-connected double-threshold hysteresis."""
    params.validate()
    g = as_gray(gray)
    blurred = gaussian_blur(g, params.gaussian_sigma, params.kernel_size)
    grad = sobel(blurred)
    thin = non_maximum_suppression(grad)
    return hysteresis(grad.magnitude, thin, params.low_threshold, params.high_threshold)


__all__ = [
    "GradientField",
    "CannyParams",
    "DEFAULT_CANNY",
    "sobel",
    "sobel_adjoint",
    "gaussian_blur",
    "non_maximum_suppression",
    "hysteresis",
    "canny",
]
