"""Report rendering: grid tables, JSON documents, and matplotlib figures.

The experiment grid mirrors the 6-configuration x 3-resolution layout
(sleep/awake/aggregate, each with and without step features, by 5-minute,
60-minute, and daily resolution), formatted as percentages with one
decimal place. Figures are written as PNG files next to the delimited
outputs.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .dataset import RESOLUTIONS, ExperimentCell

ROW_LAYOUT = [
    ("Sleep", "sleep", "without_step"),
    ("Awake", "awake", "without_step"),
    ("Aggregate", "aggregate", "without_step"),
    ("Sleep + Step", "sleep", "with_step"),
    ("Awake + Step", "awake", "with_step"),
    ("Aggregate + Step", "aggregate", "with_step"),
]
COLUMN_TITLES = {"5min": "5-minute", "60min": "60-minute", "daily": "Aggregate"}

REFERENCE_FOOTNOTE = (
    "Reference: on the private e-Prevention SPGC 2023 challenge data, the method "
    "this pipeline follows reported its best validation score, 64.5 %, for sleep "
    "features with step information at 5-minute resolution. Scores on synthetic "
    "data are not comparable to that figure."
)


def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return "failed"
    return f"{100.0 * value:.1f} %"


def render_grid_table(grid: dict[str, float | None]) -> str:
    """Plain-text table of aggregate scores keyed by cell tag."""
    best = max((v for v in grid.values() if v is not None), default=None)
    width = 18
    lines = []
    header = "Features".ljust(width) + "".join(
        COLUMN_TITLES[r].rjust(14) for r in RESOLUTIONS
    )
    lines.append(header)
    lines.append("-" * len(header))
    for title, segment, steps in ROW_LAYOUT:
        cells = []
        for res in RESOLUTIONS:
            tag = ExperimentCell(segment, steps, res).tag
            value = grid.get(tag)
            text = _fmt(value)
            if best is not None and value == best:
                text = "*" + text
            cells.append(text.rjust(14))
        lines.append(title.ljust(width) + "".join(cells))
    lines.append("")
    lines.append("* best cell")
    lines.append(REFERENCE_FOOTNOTE)
    return "\n".join(lines) + "\n"


def write_grid_report(results: dict[str, dict | None], out_dir: str | Path) -> dict[str, Path]:
    """Write grid_report.json, grid_table.txt and grid_heatmap.png."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = {
        tag: (rep["aggregate_hmean"] if rep is not None else None)
        for tag, rep in results.items()
    }
    scored = {k: v for k, v in grid.items() if v is not None}
    best_cell = max(scored, key=scored.get) if scored else None
    doc = {
        "cells": results,
        "best_cell": best_cell,
        "reference_footnote": REFERENCE_FOOTNOTE,
    }
    json_path = out_dir / "grid_report.json"
    json_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    table_path = out_dir / "grid_table.txt"
    table_path.write_text(render_grid_table(grid))
    fig_path = out_dir / "grid_heatmap.png"
    plot_grid_heatmap(grid, fig_path)
    return {"json": json_path, "table": table_path, "figure": fig_path}


def plot_grid_heatmap(grid: dict[str, float | None], path: str | Path) -> None:
    values = np.full((len(ROW_LAYOUT), len(RESOLUTIONS)), np.nan)
    for i, (_, segment, steps) in enumerate(ROW_LAYOUT):
        for j, res in enumerate(RESOLUTIONS):
            v = grid.get(ExperimentCell(segment, steps, res).tag)
            if v is not None:
                values[i, j] = 100.0 * v
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    im = ax.imshow(values, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(RESOLUTIONS)), [COLUMN_TITLES[r] for r in RESOLUTIONS])
    ax.set_yticks(range(len(ROW_LAYOUT)), [r[0] for r in ROW_LAYOUT])
    for i in range(values.shape[0]):
        for j in range(values.shape[1]):
            text = "n/a" if np.isnan(values[i, j]) else f"{values[i, j]:.1f}"
            ax.text(j, i, text, ha="center", va="center", color="white", fontsize=9)
    ax.set_title("Aggregate harmonic-mean AUC (%) per experiment cell")
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def plot_day_scores(day_scores: pd.DataFrame, path: str | Path) -> None:
    """Per-subject day-score timelines with relapse days highlighted."""
    subjects = sorted(day_scores["subject_id"].unique())
    fig, axes = plt.subplots(
        len(subjects), 1, figsize=(9, 1.6 * len(subjects)), sharex=False, squeeze=False
    )
    for ax, sid in zip(axes[:, 0], subjects):
        grp = day_scores[day_scores["subject_id"] == sid].sort_values("date")
        x = np.arange(len(grp))
        ax.plot(x, grp["score"], lw=0.8, color="tab:blue")
        relapse = grp["label"] == "relapse"
        ax.scatter(x[relapse], grp["score"][relapse], color="tab:red", s=14, zorder=3)
        ax.set_ylabel(sid, rotation=0, ha="right", fontsize=8)
        ax.tick_params(labelsize=7)
    axes[-1, 0].set_xlabel("day index")
    fig.suptitle("Day anomaly scores (red = relapse)", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def plot_score_distributions(day_scores: pd.DataFrame, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.6))
    labeled = day_scores[day_scores["label"].isin(["normal", "relapse"])]
    for label, color in (("normal", "tab:blue"), ("relapse", "tab:red")):
        vals = labeled.loc[labeled["label"] == label, "score"]
        if len(vals):
            ax.hist(vals, bins=30, alpha=0.6, label=label, color=color, density=True)
    ax.set_xlabel("day anomaly score")
    ax.set_ylabel("density")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
