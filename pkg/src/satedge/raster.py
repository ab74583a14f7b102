"""Raster conventions shared by every stage.

Images are plain ``numpy`` arrays:

* colour rasters are ``(height, width, 3)`` float64 arrays, RGB, values in [0, 1]
* gray rasters are ``(height, width)`` float64 arrays, values in [0, 1]
* edge maps are ``(height, width)`` uint8 arrays holding only 0 and 1

Functions never modify their inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from satedge.errors import DegenerateInputError

N_BINS = 256

# ITU-R BT.601 luma weights
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def check_color(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected a (H, W, 3) colour raster, got shape {img.shape}")
    _check_range(img)
    return img


def check_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a (H, W) gray raster, got shape {img.shape}")
    _check_range(img)
    return img


def check_edges(edges: np.ndarray) -> np.ndarray:
    edges = np.asarray(edges)
    if edges.ndim != 2:
        raise ValueError(f"expected a (H, W) edge map, got shape {edges.shape}")
    if not np.isin(edges, (0, 1)).all():
        raise ValueError("edge map values must be exactly 0 or 1")
    return edges.astype(np.uint8, copy=False)


def _check_range(img: np.ndarray) -> None:
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise DegenerateInputError(f"raster has an empty dimension: {img.shape}")
    if not np.isfinite(img).all():
        raise ValueError("raster contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("raster values must lie in [0, 1]")


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Luminance of an RGB raster using BT.601 weights."""
    img = check_color(img)
    gray = img @ LUMA_WEIGHTS
    return np.clip(gray, 0.0, 1.0)


def gray_to_color(gray: np.ndarray) -> np.ndarray:
    gray = check_gray(gray)
    return np.repeat(gray[:, :, None], 3, axis=2)


def quantize(img: np.ndarray) -> np.ndarray:
    """Map [0, 1] intensities to the 256 integer levels, rounding half up."""
    return np.floor(np.asarray(img) * 255.0 + 0.5).astype(np.intp)


@dataclass(frozen=True)
class IntensityHistogram:
    """256-bin count histogram over quantized intensities."""

    bins: np.ndarray
    total: int

    def __post_init__(self):
        if self.bins.shape != (N_BINS,):
            raise ValueError(f"histogram needs {N_BINS} bins, got {self.bins.shape}")
        if int(self.bins.sum()) != self.total:
            raise ValueError("bin counts do not sum to the pixel total")

    @property
    def nonempty(self) -> np.ndarray:
        return self.bins > 0


def histogram(img: np.ndarray) -> IntensityHistogram:
    img = check_gray(img)
    counts = np.bincount(quantize(img).ravel(), minlength=N_BINS).astype(np.int64)
    return IntensityHistogram(bins=counts, total=img.size)


def border_extend(img: np.ndarray, radius: int) -> np.ndarray:
    """Reflect-pad by ``radius`` on all sides, mirroring about the edge pixel.

    A row ``[a, b, c]`` padded by 1 becomes ``[b, a, b, c, b]``.
    """
    img = check_gray(img)
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if radius >= min(img.shape):
        raise DegenerateInputError(
            f"radius {radius} is too large for a {img.shape[1]}x{img.shape[0]} raster"
        )
    if radius == 0:
        return img.copy()
    return np.pad(img, radius, mode="reflect")
