"""Figure rendering for the command-line report path.

Every CSV the pipeline emits gets a companion PNG with the same stem.  The
renderer is deliberately plain: one axes, labelled line series, tight
layout.  Output is pinned for byte-reproducibility (fixed dpi, fixed
metadata, no timestamps).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ShapeError

__all__ = ["line_plot", "png_path"]

_METADATA = {"Software": "nmqd"}


def png_path(csv_path) -> str:
    """Companion image path: same stem, .png suffix."""
    text = str(csv_path)
    if text.endswith(".csv"):
        return text[:-4] + ".png"
    return text + ".png"


def line_plot(path, x, series: dict, xlabel: str = "", ylabel: str = "",
              title: str = "", logy: bool = False) -> None:
    """Render labelled line series over a shared abscissa to a PNG file."""
    x = np.asarray(x, dtype=float)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    try:
        for label, y in series.items():
            y = np.asarray(y, dtype=float)
            if y.shape != x.shape:
                raise ShapeError(f"series {label!r} does not match the x axis")
            ax.plot(x, y, label=str(label), linewidth=1.2)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(frameon=False, fontsize=9)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, dpi=120, metadata=_METADATA)
    finally:
        plt.close(fig)
