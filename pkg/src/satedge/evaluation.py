"""SSIM-based scoring of predicted edge maps against polygon ground truth.

The ground-truth map ``G`` is the union of polygon outlines. A pixel-wise
SSIM map between ``G`` and the prediction ``D`` is binarized (``> 0``) into
the matching map ``M``, and

* ``tp = sum(M & G) / sum(G)``
* ``fp = sum(~M & D) / sum(G)``

``fp`` is normalized by the ground truth, so it can exceed one.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage as ndi

from satedge.errors import UndefinedScoreError
from satedge.raster import check_edges


@dataclass(frozen=True)
class PolygonAnnotation:
    vertices: tuple[tuple[float, float], ...]
    category: str = ""
    difficult: bool = False

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise ValueError("a polygon needs at least 3 vertices")


@dataclass(frozen=True)
class SsimParams:
    sigma: float = 1.5
    window: int = 11
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be a positive odd size")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class ScorePair:
    tp: float
    fp: float


def parse_annotations(text: str) -> list[PolygonAnnotation]:
    """Parse DOTA-style label text.

    Each object line is ``x1 y1 x2 y2 x3 y3 x4 y4 category difficult``.
    Lines that do not start with eight numbers (``imagesource:``, ``gsd:``,
    blank lines) are skipped.
    """
    out = []
    for line in text.splitlines():
        parts = line.split()
        if len(parts) < 8:
            continue
        try:
            coords = [float(p) for p in parts[:8]]
        except ValueError:
            continue
        category = parts[8] if len(parts) > 8 else ""
        difficult = len(parts) > 9 and parts[9].strip() not in ("0", "")
        verts = tuple(zip(coords[0::2], coords[1::2]))
        out.append(PolygonAnnotation(verts, category, difficult))
    return out


def read_annotations(path: str | Path) -> list[PolygonAnnotation]:
    return parse_annotations(Path(path).read_text(encoding="utf-8", errors="replace"))


def format_annotations(annotations: Iterable[PolygonAnnotation]) -> str:
    lines = []
    for a in annotations:
        coords = " ".join(f"{v:.1f}" for xy in a.vertices for v in xy)
        lines.append(f"{coords} {a.category or 'object'} {int(a.difficult)}")
    return "\n".join(lines) + ("\n" if lines else "")


def bresenham(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer points of the segment from (x0, y0) to (x1, y1), inclusive."""
    points = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        points.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return points
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def rasterize_ground_truth(annotations: Sequence[PolygonAnnotation], width: int, height: int,
                           include_difficult: bool = True) -> np.ndarray:
    """1-pixel polygon outlines, unioned, as a binary edge map.

    Vertices are ``(x, y)`` = (column, row), rounded to the nearest pixel and
    clamped to the image.
    """
    G = np.zeros((height, width), dtype=np.uint8)
    for ann in annotations:
        if ann.difficult and not include_difficult:
            continue
        pts = [(int(np.clip(round(x), 0, width - 1)), int(np.clip(round(y), 0, height - 1)))
               for x, y in ann.vertices]
        for (xa, ya), (xb, yb) in zip(pts, pts[1:] + pts[:1]):
            for x, y in bresenham(xa, ya, xb, yb):
                G[y, x] = 1
    return G


def gaussian_window(params: SsimParams) -> np.ndarray:
    r = params.window // 2
    ax = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-ax ** 2 / (2.0 * params.sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim_map(G: np.ndarray, D: np.ndarray, params: SsimParams | None = None) -> np.ndarray:
    """Per-pixel SSIM of two edge maps with Gaussian-weighted local statistics."""
    params = params or SsimParams()
    x = check_edges(G).astype(np.float64)
    y = check_edges(D).astype(np.float64)
    if x.shape != y.shape:
        raise ValueError(f"edge maps differ in shape: {x.shape} vs {y.shape}")
    w = gaussian_window(params)

    def local_mean(a):
        return ndi.correlate(a, w, mode="mirror")

    mu_x, mu_y = local_mean(x), local_mean(y)
    var_x = local_mean(x * x) - mu_x * mu_x
    var_y = local_mean(y * y) - mu_y * mu_y
    cov = local_mean(x * y) - mu_x * mu_y
    c1 = (params.k1 * params.data_range) ** 2
    c2 = (params.k2 * params.data_range) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return np.clip(num / den, -1.0, 1.0)


def matching_map(ssim: np.ndarray) -> np.ndarray:
    return (np.asarray(ssim) > 0).astype(np.uint8)


def _gt_total(G: np.ndarray) -> int:
    total = int(np.count_nonzero(G))
    if total == 0:
        raise UndefinedScoreError("ground truth has no edge pixels")
    return total


def tp_score(M: np.ndarray, G: np.ndarray) -> float:
    M, G = check_edges(M), check_edges(G)
    return np.count_nonzero(M & G) / _gt_total(G)


def fp_score(M: np.ndarray, D: np.ndarray, G: np.ndarray) -> float:
    M, D, G = check_edges(M), check_edges(D), check_edges(G)
    return np.count_nonzero((1 - M) & D) / _gt_total(G)


def score_image(D: np.ndarray, G: np.ndarray, params: SsimParams | None = None) -> ScorePair:
    M = matching_map(ssim_map(G, D, params))
    return ScorePair(tp_score(M, G), fp_score(M, D, G))


def evaluate_corpus(pairs: Sequence[tuple[np.ndarray, np.ndarray]],
                    params: SsimParams | None = None) -> ScorePair:
    """Unweighted per-image mean of the scores over ``(predicted, truth)`` pairs.

    Pairs whose ground truth is empty are left out of the mean.
    """
    if not pairs:
        raise ValueError("no image pairs to evaluate")
    scores = []
    for D, G in pairs:
        try:
            scores.append(score_image(D, G, params))
        except UndefinedScoreError:
            continue
    return mean_scores(scores)


def mean_scores(scores: Sequence[ScorePair]) -> ScorePair:
    if not scores:
        raise UndefinedScoreError("every image had an empty ground truth")
    return ScorePair(float(np.mean([s.tp for s in scores])), float(np.mean([s.fp for s in scores])))
