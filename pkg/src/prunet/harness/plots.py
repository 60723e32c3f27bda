"""Render exported figure CSVs to PNG files.

Rendering is a pure function of the CSV contents: the export path writes
the delimited data first, then these helpers draw it, so figures can
always be regenerated from the shipped CSVs alone.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .reporting import read_plot_csv

_CELL_STYLE = {
    "PRU": {"color": "tab:blue", "marker": "o"},
    "GRU": {"color": "tab:orange", "marker": "s"},
    "LSTM": {"color": "tab:green", "marker": "^"},
}


def _series_by_cell(rows):
    series = {}
    for row in rows:
        series.setdefault(row["cell"], []).append(row)
    return series


def render_sweep_csv(csv_path, png_path=None, metric_label="mean metric"):
    """Errorbar plot of mean metric vs. the swept value, one series per cell."""
    rows = read_plot_csv(csv_path)
    if not rows:
        raise ValueError(f"{csv_path} has no data rows")
    x_field = next(iter(rows[0]))
    png_path = png_path or csv_path[:-len(".csv")] + ".png"
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for cell, cell_rows in sorted(_series_by_cell(rows).items()):
        cell_rows = sorted(cell_rows, key=lambda r: r[x_field])
        xs = [r[x_field] for r in cell_rows]
        means = [r["mean_metric"] for r in cell_rows]
        stds = [r["std_metric"] or 0.0 for r in cell_rows]
        style = _CELL_STYLE.get(cell, {})
        ax.errorbar(xs, means, yerr=stds, label=cell, capsize=3, **style)
    ax.set_xlabel(x_field)
    ax.set_ylabel(metric_label)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return png_path


def render_curves_csv(csv_path, png_path=None):
    """Train-loss-vs-epoch lines, one per cell."""
    rows = read_plot_csv(csv_path)
    if not rows:
        raise ValueError(f"{csv_path} has no data rows")
    png_path = png_path or csv_path[:-len(".csv")] + ".png"
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for cell, cell_rows in sorted(_series_by_cell(rows).items()):
        cell_rows = sorted(cell_rows, key=lambda r: r["epoch"])
        xs = [r["epoch"] for r in cell_rows]
        ys = [r["mean_train_loss"] for r in cell_rows]
        style = dict(_CELL_STYLE.get(cell, {}))
        style.pop("marker", None)
        ax.plot(xs, ys, label=cell, **style)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean train loss")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return png_path


def render(csv_path, figure_kind: str, png_path=None):
    if figure_kind == "curves":
        return render_curves_csv(csv_path, png_path)
    return render_sweep_csv(csv_path, png_path)


def render_all(csv_paths, figure_kind: str):
    return [render(p, figure_kind) for p in csv_paths]
