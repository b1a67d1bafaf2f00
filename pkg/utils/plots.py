"""
FirmCast - Plot Helpers

Small matplotlib (Agg) figures written as SVG for run reports.
"""

import logging
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)

# Fixed ids and no timestamp keep SVG bytes reproducible
matplotlib.rcParams["svg.hashsalt"] = "firmcast"


def _savefig(fig, outpath: Path) -> Path:
    outpath = Path(outpath)
    outpath.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(outpath, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug(f"Wrote plot {outpath}")
    return outpath


def line_plot(
    series: Mapping[str, Sequence[float]],
    x: Sequence[float],
    outpath: Path,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
) -> Path:
    """One line per named series over a shared x axis."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for name, values in series.items():
        ax.plot(x, values, marker="o", label=name)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if series:
        ax.legend()
    return _savefig(fig, outpath)


def step_plot(
    curves: Mapping[str, tuple],
    outpath: Path,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
) -> Path:
    """Empirical CDFs given as name -> (thresholds, fractions)."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for name, (xs, ys) in curves.items():
        ax.step(np.concatenate([[0.0], xs]), np.concatenate([[0.0], ys]), where="post", label=name)
    ax.set_ylim(0.0, 1.02)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if curves:
        ax.legend()
    return _savefig(fig, outpath)


def grouped_bar_plot(
    values: Mapping[str, Mapping[str, float]],
    outpath: Path,
    title: str = "",
    ylabel: str = "",
) -> Path:
    """Bars per group (outer key) and series (inner key)."""
    groups = list(values)
    names = sorted({name for inner in values.values() for name in inner})
    width = 0.8 / max(len(names), 1)
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(groups)), 4))
    positions = np.arange(len(groups))
    for k, name in enumerate(names):
        heights = [values[g].get(name, np.nan) for g in groups]
        ax.bar(positions + k * width, heights, width, label=name)
    ax.set_xticks(positions + width * (len(names) - 1) / 2)
    ax.set_xticklabels(groups)
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    if names:
        ax.legend()
    return _savefig(fig, outpath)


def scatter_plot(
    coords: np.ndarray,
    labels: Sequence[str],
    outpath: Path,
    title: str = "",
    axis_labels: Optional[Sequence[str]] = None,
) -> Path:
    """2-D scatter colored by a categorical label."""
    coords = np.asarray(coords, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 5))
    categories: Dict[str, list] = {}
    for index, label in enumerate(labels):
        categories.setdefault(label, []).append(index)
    for label in sorted(categories):
        rows = categories[label]
        ax.scatter(coords[rows, 0], coords[rows, 1], s=12, label=label)
    if axis_labels:
        ax.set_xlabel(axis_labels[0])
        ax.set_ylabel(axis_labels[1])
    ax.set_title(title)
    if categories:
        ax.legend()
    return _savefig(fig, outpath)
