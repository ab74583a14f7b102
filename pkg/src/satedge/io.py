"""Image file I/O.

8-bit files are divided by 255 on load; saving multiplies by 255 and rounds
half up. 16-bit files are scaled by 65535. Gray files load as three
identical channels.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from satedge.raster import check_color, check_edges, check_gray, quantize

IMAGE_SUFFIXES = (".png", ".tif", ".tiff", ".bmp", ".pgm", ".ppm")


def list_images(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def read_image(path: str | Path) -> np.ndarray:
    """Load a 1- or 3-channel raster as an (H, W, 3) float array in [0, 1]."""
    with Image.open(path) as im:
        im.load()
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
            arr = np.clip(arr, 0.0, 1.0)
        elif im.mode == "F":
            arr = np.clip(np.asarray(im, dtype=np.float64), 0.0, 1.0)
        else:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    return check_color(arr)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(quantize(img), 0, 255).astype(np.uint8)


def write_image(path: str | Path, img: np.ndarray) -> None:
    """Save a gray or colour raster as 8-bit. TIFF output is uncompressed."""
    img = np.asarray(img, dtype=np.float64)
    img = check_gray(img) if img.ndim == 2 else check_color(img)
    Image.fromarray(to_uint8(img)).save(path)


def write_edges(path: str | Path, edges: np.ndarray) -> None:
    edges = check_edges(edges)
    Image.fromarray(edges * np.uint8(255)).save(path)


def read_edges(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr >= 128).astype(np.uint8)


def edge_overlay(img: np.ndarray, edges: np.ndarray, color=(1.0, 0.0, 0.0)) -> np.ndarray:
    """Source image with edge pixels painted in ``color`` (red by default)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    out = check_color(img).copy()
    out[check_edges(edges).astype(bool)] = color
    return out
