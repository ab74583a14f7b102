"""Report figures: score bars and timing curves, written straight to files."""
from __future__ import annotations

import contextlib
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

REPORT_RC = {
    "figure.dpi": 110,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}

HIGHLIGHT = "#c0392b"
MUTED = "#7f8c8d"


@contextlib.contextmanager
def report_style():
    with plt.rc_context(REPORT_RC):
        yield


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_score_bars(labels: Sequence[str], tp: Sequence[float], fp: Sequence[float], path,
                    title: str = "", highlight: int | None = 0):
    """Side-by-side TP and FP bars, one bar per method or variant.

    ``highlight`` colours one bar (the reference configuration).
    """
    with report_style():
        fig, (ax_tp, ax_fp) = plt.subplots(1, 2, figsize=(max(6.0, 1.1 * len(labels) + 3), 3.4))
        x = np.arange(len(labels))
        colors = [HIGHLIGHT if i == highlight else MUTED for i in range(len(labels))]
        for ax, values, name in ((ax_tp, tp, "TP score (higher is better)"),
                                 (ax_fp, fp, "FP score (lower is better)")):
            ax.bar(x, values, color=colors)
            ax.set_xticks(x)
            ax.set_xticklabels(labels, rotation=35, ha="right")
            ax.set_title(name)
            for xi, v in zip(x, values):
                ax.annotate(f"{v:.3f}", (xi, v), ha="center", va="bottom", fontsize=8)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        return _save(fig, path)


def plot_timing(pixels: Sequence[float], ms: Sequence[float], path, slope: float | None = None):
    """Run time against pixel count on log-log axes."""
    with report_style():
        fig, ax = plt.subplots(figsize=(4.8, 3.4))
        ax.loglog(pixels, ms, "o-", color=HIGHLIGHT, label="pipeline + Canny")
        if slope is not None and len(pixels) >= 2:
            ax.text(0.05, 0.92, f"log-log slope {slope:.2f}", transform=ax.transAxes)
        ax.set_xlabel("pixels")
        ax.set_ylabel("time (ms)")
        ax.legend(loc="lower right")
        fig.tight_layout()
        return _save(fig, path)
