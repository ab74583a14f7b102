"""Synthetic annotated aerial scenes in the DOTA directory layout.

Stand-in corpus for when no real annotated imagery is at hand. A scene has

* low-frequency terrain with field-scale texture and a tinted haze,
* unannotated clutter: roads, small vehicles/trees, fine texture, sensor noise,
* annotated objects: oriented rectangles (buildings, tanks, vehicles) whose
  contrast against the local background ranges from faint to strong; the
  labels are loose quads a few pixels outside the object, as hand labels are,
* optionally a large dark water body or a bright glare patch, which skews
  the intensity histogram.

Scenes are quantized to 8 bits like real imagery. Output layout::

    out/images/S0000.png
    out/labelTxt/S0000.txt
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
from scipy import ndimage as ndi
from skimage.draw import polygon as fill_polygon

from satedge.evaluation import PolygonAnnotation, format_annotations

CATEGORIES = ("building", "storage-tank", "large-vehicle", "roundabout-pad")


def _smooth_field(rng, shape, sigma):
    f = ndi.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    f -= f.min()
    return f / (f.max() + 1e-12)


def _oriented_rect(cx, cy, w, h, theta):
    c, s = np.cos(theta), np.sin(theta)
    corners = [(-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)]
    return [(cx + x * c - y * s, cy + x * s + y * c) for x, y in corners]


def make_scene(rng: np.random.Generator, size: int = 256) -> tuple[np.ndarray, list[PolygonAnnotation]]:
    """One colour scene in [0, 1] and its object annotations."""
    shape = (size, size)
    terrain = 0.25 + 0.45 * _smooth_field(rng, shape, size / 6)
    fields = _smooth_field(rng, shape, 3.0) - 0.5
    gray = terrain + rng.uniform(0.05, 0.15) * fields

    kind = rng.choice(["plain", "water", "glare"], p=[0.6, 0.25, 0.15])
    if kind == "water":
        mask = _smooth_field(rng, shape, size / 8) > rng.uniform(0.45, 0.6)
        gray = np.where(mask, 0.06 + 0.04 * _smooth_field(rng, shape, 4.0), gray)
    elif kind == "glare":
        mask = _smooth_field(rng, shape, size / 8) > rng.uniform(0.5, 0.65)
        gray = np.where(mask, 0.88 + 0.1 * _smooth_field(rng, shape, 4.0), gray)

    # roads: long straight strips, not annotated
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(rng.integers(0, 3)):
        theta = rng.uniform(0, np.pi)
        offset = rng.uniform(0.2, 0.8) * size
        dist = np.abs((xx - size / 2) * np.sin(theta) - (yy - size / 2) * np.cos(theta) - (offset - size / 2))
        gray = np.where(dist < rng.uniform(2, 4), rng.uniform(0.35, 0.75), gray)

    annotations = []
    occupied = np.zeros(shape, dtype=bool)
    scale = min(1.0, size / 128)   # keeps objects inside small scenes
    for _ in range(rng.integers(3, 9)):
        w, h = scale * rng.uniform(10, 40), scale * rng.uniform(8, 30)
        cx, cy = rng.uniform(w, size - w), rng.uniform(h, size - h)
        theta = rng.uniform(0, np.pi) if rng.random() < 0.5 else 0.0
        verts = _oriented_rect(cx, cy, w, h, theta)
        rr, cc = fill_polygon([v[1] for v in verts], [v[0] for v in verts], shape)
        if rr.size == 0 or occupied[rr, cc].any():
            continue
        occupied[rr, cc] = True
        background = float(np.median(gray[rr, cc]))
        contrast = rng.uniform(0.04, 0.3) * rng.choice([-1, 1])
        fill = np.clip(background + contrast, 0.02, 0.98)
        gray[rr, cc] = fill + 0.02 * fields[rr, cc]
        # hand-drawn labels enclose the object with a little slack
        margin = rng.uniform(0.0, 3.0)
        label = _oriented_rect(cx, cy, w + 2 * margin, h + 2 * margin, theta)
        label = [(x + rng.uniform(-1, 1), y + rng.uniform(-1, 1)) for x, y in label]
        annotations.append(PolygonAnnotation(tuple(label), str(rng.choice(CATEGORIES)),
                                             bool(rng.random() < 0.1)))

    # small unannotated clutter: vehicles, trees, sheds
    n_clutter = int(rng.integers(40, 160) * (size / 256) ** 2)
    for _ in range(n_clutter):
        r, c = rng.integers(0, size - 3, 2)
        k = rng.integers(1, 4)
        gray[r:r + k, c:c + k] += rng.uniform(-0.2, 0.2)

    gray = gray + rng.uniform(0.01, 0.035) * rng.standard_normal(shape)

    tint = rng.uniform(0.85, 1.15, 3)
    color = np.clip(gray[:, :, None] * tint, 0.0, 1.0)
    haze = rng.uniform(0.0, 0.45)
    haze_color = np.array([rng.uniform(0.6, 0.9), rng.uniform(0.6, 0.9), rng.uniform(0.7, 1.0)])
    color = (1.0 - haze) * color + haze * haze_color
    color = np.floor(np.clip(color, 0.0, 1.0) * 255.0 + 0.5) / 255.0
    return color, annotations


def write_corpus(out: str | Path, count: int, size: int = 256, seed: int = 0) -> list[Path]:
    """Write ``count`` scenes under ``out/images`` and ``out/labelTxt``."""
    from satedge.io import write_image

    out = Path(out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "labelTxt").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        img, anns = make_scene(rng, size)
        name = f"S{i:04d}"
        write_image(out / "images" / f"{name}.png", img)
        header = "imagesource:synthetic\ngsd:1.0\n"
        (out / "labelTxt" / f"{name}.txt").write_text(header + format_annotations(anns), encoding="utf-8")
        paths.append(out / "images" / f"{name}.png")
    return paths


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="satedge-synth", description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--count", type=int, default=100)
    parser.add_argument("--size", type=int, default=256)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    write_corpus(args.out, args.count, args.size, args.seed)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
