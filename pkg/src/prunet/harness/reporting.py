"""Result post-processing: per-epoch timing tables with the cell-speed
ordering, figure-data CSV export, and a Spearman trend statistic.

Exported CSVs carry repr-formatted floats, so parsing a file reproduces
the in-memory aggregates exactly.
"""

from __future__ import annotations

import glob
import json
import os
from dataclasses import dataclass

import numpy as np

from ..errors import DataError

CELL_SPEED_ORDER = ("PRU", "GRU", "LSTM")


def load_results_dir(results_dir) -> list:
    """All run documents in a directory, each with its timing sidecar."""
    paths = sorted(glob.glob(os.path.join(results_dir, "*.json")))
    paths = [p for p in paths if not p.endswith(".timing.json")]
    if not paths:
        raise DataError(f"no result files in {results_dir}")
    docs = []
    for path in paths:
        with open(path, "r", encoding="ascii") as fh:
            doc = json.load(fh)
        timing_path = path[:-len(".json")] + ".timing.json"
        doc["timing"] = None
        if os.path.exists(timing_path):
            with open(timing_path, "r", encoding="ascii") as fh:
                doc["timing"] = json.load(fh)
        doc["path"] = path
        docs.append(doc)
    return docs


def _comparable_settings(doc) -> dict:
    cfg = dict(doc["config"])
    cfg.pop("cell")
    return cfg


def _require_same_settings(docs, what):
    base = _comparable_settings(docs[0])
    for doc in docs[1:]:
        other = _comparable_settings(doc)
        if other != base:
            mismatched = sorted(
                key for key in set(base) | set(other)
                if base.get(key) != other.get(key)
            )
            raise DataError(
                f"{what} needs runs differing only in cell; "
                f"{os.path.basename(doc['path'])} differs from "
                f"{os.path.basename(docs[0]['path'])} in fields: {mismatched}"
            )


@dataclass(frozen=True)
class TimingReport:
    rows: tuple          # (cell, mean_epoch_seconds, epoch_count) per cell
    ordering: str        # "holds" | "violated" | "inconclusive" | "single"

    def describe(self) -> str:
        lines = [f"{'cell':<6} {'mean s/epoch':>14} {'epochs':>8}"]
        for cell, mean_s, n in self.rows:
            lines.append(f"{cell:<6} {mean_s:>14.6f} {n:>8}")
        lines.append(f"speed ordering PRU < GRU < LSTM: {self.ordering}")
        return "\n".join(lines)


def timing_report(results_dir) -> TimingReport:
    """Mean per-epoch wall time per cell kind over comparable runs.

    All runs in the directory must share every setting except the cell;
    otherwise the mismatched fields are reported. The ordering flag states
    whether PRU < GRU < LSTM holds strictly over the cells present.
    """
    docs = load_results_dir(results_dir)
    _require_same_settings(docs, "timing comparison")
    by_cell = {}
    for doc in docs:
        timing = doc.get("timing")
        if not timing or not timing.get("epoch_seconds"):
            raise DataError(f"{doc['path']} has no timing sidecar")
        flat = [s for series in timing["epoch_seconds"] for s in series]
        by_cell.setdefault(doc["config"]["cell"], []).extend(flat)
    rows = tuple(
        (cell, float(np.mean(series)), len(series))
        for cell, series in sorted(by_cell.items())
    )
    present = [c for c in CELL_SPEED_ORDER if c in by_cell]
    if len(present) < 2:
        ordering = "single"
    else:
        means = [np.mean(by_cell[c]) for c in present]
        if any(a == b for a, b in zip(means, means[1:])):
            ordering = "inconclusive"
        elif all(a < b for a, b in zip(means, means[1:])):
            ordering = "holds"
        else:
            ordering = "violated"
    return TimingReport(rows=rows, ordering=ordering)


# ---------------------------------------------------------------------------
# figure-data export
# ---------------------------------------------------------------------------

FIGURE_KINDS = ("sweep", "curves")


def _detect_sweep_fields(docs):
    """Config fields that vary across runs (cell aside), in a fixed order."""
    keys = ("k", "target_param_count", "I", "N", "delta2")

    def value(doc, key):
        if key in ("k", "target_param_count"):
            return doc["config"][key]
        return doc["config"]["task_params"].get(key)

    varying = []
    for key in keys:
        values = {value(d, key) for d in docs}
        if len(values) > 1:
            varying.append(key)
    return varying, value


def export_plotdata(results_dir, figure_kind: str, normalize_delta2: bool = False,
                    out_dir=None) -> list:
    """Write figure-backing CSVs from a completed sweep.

    sweep: one CSV per figure with columns (sweep value, cell, mean metric,
    std); with two swept fields, one CSV per value of the second field.
    curves: per-epoch mean train loss per cell (runs must differ only in
    cell). With normalize_delta2, MSE columns are divided by the task's
    noise variance.
    """
    docs = load_results_dir(results_dir)
    out_dir = out_dir or results_dir
    os.makedirs(out_dir, exist_ok=True)
    if figure_kind not in FIGURE_KINDS:
        raise DataError(f"unknown figure kind {figure_kind!r}; expected {FIGURE_KINDS}")

    def norm_factor(doc):
        if not normalize_delta2:
            return 1.0
        delta2 = doc["config"]["task_params"].get("delta2")
        if delta2 is None:
            raise DataError("normalize_delta2 needs a task with a delta2 parameter")
        if delta2 == 0:
            raise DataError("cannot normalize by delta2 = 0")
        return float(delta2)

    if figure_kind == "sweep":
        varying, value_of = _detect_sweep_fields(docs)
        if not varying:
            raise DataError("no swept field varies across these results")
        if len(varying) > 2:
            raise DataError(f"too many varying fields for one figure: {varying}")
        x_field = varying[0]
        group_field = varying[1] if len(varying) > 1 else None
        groups = {}
        for doc in docs:
            key = value_of(doc, group_field) if group_field else None
            groups.setdefault(key, []).append(doc)
        paths = []
        for key in sorted(groups, key=lambda v: (v is None, v)):
            suffix = "" if key is None else f"_{group_field}{key}"
            path = os.path.join(out_dir, f"figure_sweep_{x_field}{suffix}.csv")
            rows = sorted(
                (
                    value_of(doc, x_field),
                    doc["config"]["cell"],
                    doc["aggregates"]["mean_metric"] / norm_factor(doc)
                    if doc["aggregates"]["mean_metric"] is not None else None,
                    doc["aggregates"]["std_metric"] / norm_factor(doc)
                    if doc["aggregates"]["std_metric"] is not None else None,
                )
                for doc in groups[key]
            )
            with open(path, "w", encoding="ascii") as fh:
                fh.write(f"{x_field},cell,mean_metric,std_metric\n")
                for x, cell, mean, std in rows:
                    fh.write(
                        f"{_fmt(x)},{cell},{_fmt(mean)},{_fmt(std)}\n"
                    )
            paths.append(path)
        return paths

    # curves: per-epoch mean train loss across restarts, one series per cell
    _require_same_settings(docs, "curve export")
    path = os.path.join(out_dir, "figure_curves.csv")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("epoch,cell,mean_train_loss,std_train_loss\n")
        for doc in docs:
            factor = norm_factor(doc)
            losses = [
                r["train_loss"] for r in doc["restarts"] if not r["failed"]
            ]
            if not losses:
                continue
            arr = np.asarray(losses) / factor
            for epoch in range(arr.shape[1]):
                fh.write(
                    f"{epoch + 1},{doc['config']['cell']},"
                    f"{_fmt(float(arr[:, epoch].mean()))},"
                    f"{_fmt(float(arr[:, epoch].std()))}\n"
                )
    return [path]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_plot_csv(path) -> list:
    """Parse an exported CSV back into typed rows (round-trip exact)."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        rows = []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            row = {}
            for name, part in zip(header, parts):
                if part == "":
                    row[name] = None
                else:
                    try:
                        row[name] = int(part)
                    except ValueError:
                        try:
                            row[name] = float(part)
                        except ValueError:
                            row[name] = part
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# trend statistic
# ---------------------------------------------------------------------------


def _ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    ranks[order] = np.arange(1, len(values) + 1)
    # average ranks over ties
    for v in np.unique(values):
        mask = values == v
        if mask.sum() > 1:
            ranks[mask] = ranks[mask].mean()
    return ranks


def spearman_rho(x, y) -> float:
    """Spearman rank correlation (average ranks over ties)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("spearman_rho needs two equal-length 1-D samples")
    rx = _ranks(x)
    ry = _ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx @ rx) * (ry @ ry))
    if denom == 0:
        return 0.0
    return float((rx @ ry) / denom)
