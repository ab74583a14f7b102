"""Canny edge detection and a robust noise-scale estimator."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy import ndimage as ndi
from skimage.filters import threshold_otsu

from satedge.errors import DegenerateInputError
from satedge.raster import check_gray

# normal-consistency constant for the median absolute value
MAD_SCALE = 1.4826

# separable Sobel, scaled by 1/8 so a unit ramp has unit gradient
_DERIV = np.array([-1.0, 0.0, 1.0])
_SMOOTH = np.array([1.0, 2.0, 1.0]) / 8.0

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class CannyParams:
    """Hysteresis thresholds in gradient-magnitude units (intensity per pixel).

    Leave either threshold as ``None`` to derive it automatically. With
    ``auto_mode="otsu"`` the high threshold is the Otsu split of the nonzero
    gradient magnitudes; with ``auto_mode="noise"`` it is a multiple of the
    Sobel response expected from pure noise at the estimated noise scale.
    The low threshold defaults to ``low_ratio * high``.
    """

    low_threshold: Optional[float] = None
    high_threshold: Optional[float] = None
    auto_mode: Literal["otsu", "noise"] = "otsu"
    low_ratio: float = 0.4

    def __post_init__(self):
        if self.auto_mode not in ("otsu", "noise"):
            raise ValueError(f"unknown auto_mode {self.auto_mode!r}")
        if not 0.0 < self.low_ratio < 1.0:
            raise ValueError("low_ratio must lie in (0, 1)")
        lo, hi = self.low_threshold, self.high_threshold
        if lo is not None and lo <= 0:
            raise ValueError("low_threshold must be positive")
        if hi is not None and hi <= 0:
            raise ValueError("high_threshold must be positive")
        if lo is not None and hi is not None and not lo < hi:
            raise ValueError("low_threshold must be below high_threshold")


def neighbor_differences(img: np.ndarray) -> np.ndarray:
    """Absolute differences between every pair of 4-connected pixels."""
    dx = np.abs(np.diff(img, axis=1)).ravel()
    dy = np.abs(np.diff(img, axis=0)).ravel()
    return np.concatenate([dx, dy])


def noise_estimate(img: np.ndarray) -> float:
    """Robust noise scale of a gray raster.

    ``1.4826 * median(|d|)`` over all 4-neighbour differences ``d``. When more
    than half the differences are exactly zero (flat or 8-bit quantized
    content) the median collapses, so the estimate falls back to the
    mean-absolute form ``sqrt(pi/2) * mean(|d|)``, which stays positive for
    any non-constant raster.
    """
    img = check_gray(img)
    if min(img.shape) < 2:
        raise DegenerateInputError("noise estimate needs at least a 2x2 raster")
    d = neighbor_differences(img)
    est = MAD_SCALE * float(np.median(d))
    if est == 0.0:
        est = np.sqrt(np.pi / 2.0) * float(d.mean())
    return est


def sobel_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # separable form, derivative first: flat regions give exactly zero
    # instead of rounding residue that the automatic thresholds would pick up
    gx = ndi.correlate1d(ndi.correlate1d(img, _DERIV, axis=1, mode="mirror"), _SMOOTH, axis=0, mode="mirror")
    gy = ndi.correlate1d(ndi.correlate1d(img, _DERIV, axis=0, mode="mirror"), _SMOOTH, axis=1, mode="mirror")
    return gx, gy


def non_maximum_suppression(magnitude: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Boolean mask of pixels that are ridge maxima across the edge.

    Directions are quantized to 0/45/90/135 degrees. A pixel must be
    ``>=`` its backward neighbour and ``>`` its forward neighbour, which
    thins plateaus of two equal responses (a sharp step) to one pixel.
    """
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    padded = np.pad(magnitude, 1, mode="constant")
    h, w = magnitude.shape

    def shifted(dr, dc):
        return padded[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]

    # (row, col) offset of the forward neighbour along the gradient
    sectors = [
        ((angle < 22.5) | (angle >= 157.5), (0, 1)),
        ((angle >= 22.5) & (angle < 67.5), (1, 1)),
        ((angle >= 67.5) & (angle < 112.5), (1, 0)),
        ((angle >= 112.5) & (angle < 157.5), (1, -1)),
    ]
    keep = np.zeros(magnitude.shape, dtype=bool)
    for sector, (dr, dc) in sectors:
        fwd = shifted(dr, dc)
        bwd = shifted(-dr, -dc)
        keep |= sector & (magnitude >= bwd) & (magnitude > fwd)
    return keep & (magnitude > 0)


def hysteresis(candidates: np.ndarray, strong: np.ndarray) -> np.ndarray:
    """Keep every 8-connected component of ``candidates`` touching ``strong``."""
    labels, n = ndi.label(candidates, structure=_EIGHT_CONNECTED)
    if n == 0:
        return np.zeros(candidates.shape, dtype=bool)
    hit = np.zeros(n + 1, dtype=bool)
    hit[labels[strong & candidates]] = True
    hit[0] = False
    return hit[labels]


def auto_thresholds(img: np.ndarray, magnitude: np.ndarray, params: CannyParams) -> tuple[float, float]:
    if params.high_threshold is not None:
        high = params.high_threshold
    elif params.auto_mode == "otsu":
        nz = magnitude[magnitude > 0]
        if nz.size == 0:
            return np.inf, np.inf
        high = float(threshold_otsu(nz)) if np.ptp(nz) > 0 else float(nz[0])
    else:
        # pixel noise is diff-noise / sqrt(2); each Sobel/8 component of iid
        # noise has std sqrt(12)/8 of that; take three standard deviations
        sigma = noise_estimate(img) / np.sqrt(2.0)
        high = 3.0 * np.sqrt(12.0) / 8.0 * sigma
        if high == 0.0:
            return np.inf, np.inf
    low = params.low_threshold if params.low_threshold is not None else params.low_ratio * high
    low = min(low, high)
    return float(low), float(high)


def canny_detect(img: np.ndarray, params: CannyParams | None = None) -> np.ndarray:
    """Binary Canny edge map of a gray raster."""
    img = check_gray(img)
    if min(img.shape) < 3:
        raise DegenerateInputError("Canny needs at least a 3x3 raster")
    params = params or CannyParams()
    gx, gy = sobel_gradients(img)
    magnitude = np.hypot(gx, gy)
    low, high = auto_thresholds(img, magnitude, params)
    if not np.isfinite(high):
        return np.zeros(img.shape, dtype=np.uint8)
    ridge = non_maximum_suppression(magnitude, gx, gy)
    candidates = ridge & (magnitude >= low)
    edges = hysteresis(candidates, magnitude >= high)
    return edges.astype(np.uint8)
