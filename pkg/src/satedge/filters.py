"""Pre-processing stages applied ahead of edge detection.

Every function takes a raster in [0, 1] and returns a new raster of the same
shape in [0, 1]. The two conditional stages also return whether they fired;
when they do not fire the input is returned untouched.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import ndimage as ndi

from satedge.canny import noise_estimate
from satedge.errors import (DegenerateChannelWarning, DegenerateRangeWarning,
                            NumericInstabilityError)
from satedge.raster import N_BINS, check_color, check_gray, histogram

GAUSSIAN_SIGMA = 1.5


@dataclass(frozen=True)
class DiffusionParams:
    """Perona-Malik settings.

    ``K`` is only read when ``K_mode == "fixed"``; otherwise it is taken from
    :func:`satedge.canny.noise_estimate` of the input raster.
    """

    iterations: int = 10
    time_step: float = 0.25
    K: float = 0.05
    K_mode: Literal["fixed", "canny-noise-estimate"] = "canny-noise-estimate"

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if not 0.0 < self.time_step <= 0.25:
            raise ValueError("time_step must lie in (0, 0.25] for a stable 4-neighbour scheme")
        if self.K_mode not in ("fixed", "canny-noise-estimate"):
            raise ValueError(f"unknown K_mode {self.K_mode!r}")
        if self.K_mode == "fixed" and not self.K > 0:
            raise ValueError("K must be positive")


@dataclass(frozen=True)
class ConditionalTriggerParams:
    """Thresholds for the two histogram-triggered stages.

    skew_tail_fraction
        Share of the 256 bins counted as the upper or lower tail.
    skew_ratio_threshold
        Tail-mass ratio above which contrast normalization fires.
    shift_factor
        Size of the intensity shift, as a fraction of full range.
    shift_mode
        ``"additive"`` subtracts/adds ``shift_factor``; ``"multiplicative"``
        scales by ``1 -/+ shift_factor``.
    saturate_shift
        Clip the shifted raster to [0, 1] before re-stretching. Without it
        the shift is an affine map that the min-max stretch exactly undoes.
    sparse_bin_fraction
        A non-empty bin is sparse if it holds at most this share of pixels.
    sparse_bin_trigger
        Secondary blur fires when sparse bins exceed this share of the
        reference bin count.
    sparse_denominator
        ``"nonempty"`` or ``"all"``: which bins form that reference count.
    """

    skew_tail_fraction: float = 0.10
    skew_ratio_threshold: float = 2.0
    shift_factor: float = 0.20
    shift_mode: Literal["additive", "multiplicative"] = "additive"
    saturate_shift: bool = True
    sparse_bin_fraction: float = 0.0001
    sparse_bin_trigger: float = 0.10
    sparse_denominator: Literal["nonempty", "all"] = "nonempty"

    def __post_init__(self):
        for name in ("skew_tail_fraction", "shift_factor", "sparse_bin_fraction", "sparse_bin_trigger"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")
        if not self.skew_ratio_threshold > 1.0:
            raise ValueError("skew_ratio_threshold must exceed 1")
        if self.shift_mode not in ("additive", "multiplicative"):
            raise ValueError(f"unknown shift_mode {self.shift_mode!r}")
        if self.sparse_denominator not in ("nonempty", "all"):
            raise ValueError(f"unknown sparse_denominator {self.sparse_denominator!r}")

    @property
    def tail_bins(self) -> int:
        return max(1, int(round(self.skew_tail_fraction * N_BINS)))


@dataclass
class StageOutcome:
    """What a conditional stage decided, plus the numbers it decided on."""

    applied: bool
    diagnostics: dict = field(default_factory=dict)


def gray_world_gains(img: np.ndarray) -> np.ndarray | None:
    """Per-channel gains equalizing the channel means, or None if one is zero."""
    means = img.reshape(-1, 3).mean(axis=0)
    if (means == 0).any():
        return None
    return means.mean() / means


def white_balance(img: np.ndarray) -> np.ndarray:
    """Gray-world white balance.

    Each channel is scaled so its mean matches the mean of the three channel
    means, then clipped to [0, 1]. If any channel is entirely black the image
    is returned unchanged and a :class:`DegenerateChannelWarning` is issued.
    """
    img = check_color(img)
    gains = gray_world_gains(img)
    if gains is None:
        warnings.warn("white balance skipped: a channel has zero mean", DegenerateChannelWarning, stacklevel=2)
        return img.copy()
    return np.clip(img * gains, 0.0, 1.0)


def _diffusion_step(u: np.ndarray, kappa: float, dt: float) -> None:
    # each 4-neighbour link carries one flux; borders have no outside link,
    # which is the zero-flux condition
    dx = np.diff(u, axis=1)
    dy = np.diff(u, axis=0)
    fx = np.exp(-(dx / kappa) ** 2) * dx
    fy = np.exp(-(dy / kappa) ** 2) * dy
    fx *= dt
    fy *= dt
    u[:, :-1] += fx
    u[:, 1:] -= fx
    u[:-1, :] += fy
    u[1:, :] -= fy


def anisotropic_diffusion(img: np.ndarray, params: DiffusionParams | None = None) -> np.ndarray:
    """Explicit Perona-Malik diffusion with exponential conduction.

    The conduction on every link is ``exp(-(|d| / K)^2)`` where ``d`` is the
    directional difference across that link.
    """
    img = check_gray(img)
    params = params or DiffusionParams()
    if params.iterations == 0:
        return img.copy()
    if params.K_mode == "fixed":
        kappa = params.K
    else:
        kappa = noise_estimate(img) if min(img.shape) >= 2 else 0.0
    if kappa <= 0.0:
        # flat raster: every link has zero difference, nothing moves
        return img.copy()
    u = img.copy()
    for _ in range(params.iterations):
        _diffusion_step(u, kappa, params.time_step)
    if not np.isfinite(u).all():
        raise NumericInstabilityError(
            f"diffusion diverged (time_step={params.time_step}, K={kappa})"
        )
    return np.clip(u, 0.0, 1.0)


def skew_statistics(img: np.ndarray, params: ConditionalTriggerParams) -> dict:
    hist = histogram(img)
    n = params.tail_bins
    lower = int(hist.bins[:n].sum())
    upper = int(hist.bins[-n:].sum())
    if lower == 0 and upper == 0:
        ratio = 1.0
    elif lower == 0:
        ratio = np.inf
    elif upper == 0:
        ratio = 0.0
    else:
        ratio = upper / lower
    return {"upper_mass": upper, "lower_mass": lower, "skew_ratio": ratio}


def conditional_contrast_normalization(img: np.ndarray, params: ConditionalTriggerParams | None = None,
                                       force: bool = False) -> tuple[np.ndarray, StageOutcome]:
    """Shift a tail-heavy raster away from its heavy side and re-stretch it.

    Fires when the upper-tail mass exceeds the lower-tail mass by more than
    ``skew_ratio_threshold`` (bright skew, shift down) or the reverse (dark
    skew, shift up). ``force`` applies the shift even without skew, in the
    direction of the heavier tail.
    """
    img = check_gray(img)
    params = params or ConditionalTriggerParams()
    stats = skew_statistics(img, params)
    ratio = stats["skew_ratio"]
    t = params.skew_ratio_threshold
    if ratio > t:
        direction = -1
    elif ratio < 1.0 / t:
        direction = 1
    elif force:
        direction = -1 if ratio >= 1.0 else 1
    else:
        return img, StageOutcome(False, stats)

    s = params.shift_factor
    if params.shift_mode == "additive":
        shifted = img + direction * s
    else:
        shifted = img * (1.0 + direction * s)
    if params.saturate_shift:
        shifted = np.clip(shifted, 0.0, 1.0)
    lo, hi = shifted.min(), shifted.max()
    stats["direction"] = "down" if direction < 0 else "up"
    if hi == lo:
        # nothing left to stretch
        return img, StageOutcome(False, stats)
    out = (shifted - lo) / (hi - lo)
    return np.clip(out, 0.0, 1.0), StageOutcome(True, stats)


def fuzzy_histogram_hyperbolization(img: np.ndarray, L: int = 256) -> np.ndarray:
    """Fuzzy histogram hyperbolization (Tizhoosh & Fochem).

    Membership ``mu = (g - g_min) / (g_max - g_min)`` is mapped through
    ``lambda * (exp(-mu) - 1)`` with ``lambda = (L - 1) / (exp(-1) - 1)``,
    then divided by ``L - 1``. Dark tones are expanded and bright tones
    compressed; ``g_min`` lands on 0 and ``g_max`` on 1.
    """
    img = check_gray(img)
    if L < 2:
        raise ValueError("L must be at least 2")
    g_min, g_max = img.min(), img.max()
    if g_max == g_min:
        warnings.warn("hyperbolization skipped: constant raster", DegenerateRangeWarning, stacklevel=2)
        return img.copy()
    mu = (img - g_min) / (g_max - g_min)
    lam = (L - 1) / (np.exp(-1.0) - 1.0)
    out = lam * np.expm1(-mu) / (L - 1)
    return np.clip(out, 0.0, 1.0)


def median_blur(img: np.ndarray) -> np.ndarray:
    """3x3 median with mirrored borders."""
    img = check_gray(img)
    return ndi.median_filter(img, size=3, mode="mirror")


def gaussian_kernel(sigma: float = GAUSSIAN_SIGMA, size: int = 3) -> np.ndarray:
    """Sampled 2-D Gaussian, normalized to sum to one."""
    r = size // 2
    ax = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def gaussian_blur(img: np.ndarray, sigma: float = GAUSSIAN_SIGMA) -> np.ndarray:
    """3x3 Gaussian blur with mirrored borders."""
    img = check_gray(img)
    out = ndi.correlate(img, gaussian_kernel(sigma), mode="mirror")
    # a convex combination cannot leave [min, max]; clip away rounding drift
    return np.clip(out, img.min(), img.max())


def sparse_bin_statistics(img: np.ndarray, params: ConditionalTriggerParams) -> dict:
    hist = histogram(img)
    nonempty = hist.bins > 0
    sparse = nonempty & (hist.bins / hist.total <= params.sparse_bin_fraction)
    n_ref = int(nonempty.sum()) if params.sparse_denominator == "nonempty" else N_BINS
    n_sparse = int(sparse.sum())
    return {
        "nonempty_bins": int(nonempty.sum()),
        "sparse_bins": n_sparse,
        "sparse_fraction": n_sparse / n_ref if n_ref else 0.0,
    }


def conditional_gaussian_blur(img: np.ndarray, params: ConditionalTriggerParams | None = None,
                              force: bool = False,
                              sigma: float = GAUSSIAN_SIGMA) -> tuple[np.ndarray, StageOutcome]:
    """Blur once more if too many histogram bins are nearly empty."""
    img = check_gray(img)
    params = params or ConditionalTriggerParams()
    stats = sparse_bin_statistics(img, params)
    if not (force or stats["sparse_fraction"] > params.sparse_bin_trigger):
        return img, StageOutcome(False, stats)
    return gaussian_blur(img, sigma), StageOutcome(True, stats)
