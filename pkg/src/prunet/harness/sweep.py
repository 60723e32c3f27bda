"""Parameter sweeps: cartesian expansion of list-valued config fields,
resumable execution, and a flat summary CSV.

`cell` may always hold a list (it is the comparison axis); besides it, at
most two fields may be swept. Existing result files are skipped, so an
interrupted sweep resumes where it stopped.
"""

from __future__ import annotations

import copy
import itertools
import json
import os

from ..errors import ConfigError
from .config import load_raw_config, resolve_config, validate_raw
from .runner import run_experiment

# non-cell fields that may be swept, in naming/CSV column order
SWEEP_FIELD_ORDER = ("k", "target_param_count", "I", "N", "delta2")
_TASK_LEVEL = ("I", "N", "delta2")

SUMMARY_BASE_COLUMNS = ("task", "cell", "k", "param_count")
SUMMARY_TAIL_COLUMNS = ("mean_metric", "std_metric", "mean_epoch_seconds")


def _get_field(raw, name):
    if name in _TASK_LEVEL:
        return raw["task_params"].get(name)
    return raw.get(name)


def _set_field(raw, name, value):
    if name in _TASK_LEVEL:
        raw["task_params"][name] = value
    else:
        raw[name] = value


def sweep_points(raw: dict):
    """Expand a sweep config.

    Returns (points, sweep_fields) where each point is a scalar raw config
    plus its (cell, field values) identity, and sweep_fields lists the
    swept non-cell field names in canonical order.
    """
    validate_raw(raw, allow_lists=True)
    cell_values = raw["cell"] if isinstance(raw["cell"], list) else [raw["cell"]]
    sweep_fields = [
        name for name in SWEEP_FIELD_ORDER
        if isinstance(_get_field(raw, name), list)
    ]
    if len(sweep_fields) > 2:
        raise ConfigError(
            f"at most 2 swept fields allowed (besides cell), got {sweep_fields}"
        )
    value_lists = [_get_field(raw, name) for name in sweep_fields]

    points = []
    for cell in cell_values:
        for combo in itertools.product(*value_lists):
            scalar = copy.deepcopy(raw)
            scalar["cell"] = cell
            for name, value in zip(sweep_fields, combo):
                _set_field(scalar, name, value)
            points.append({"cell": cell, "values": dict(zip(sweep_fields, combo)),
                           "raw": scalar})
    return points, sweep_fields


def point_name(task: str, point: dict) -> str:
    parts = [task, point["cell"]]
    parts += [f"{name}{value}" for name, value in point["values"].items()]
    return "_".join(parts)


def _format_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_summary_csv(rows: list, sweep_fields: list, path) -> None:
    columns = list(SUMMARY_BASE_COLUMNS) + list(sweep_fields) + list(SUMMARY_TAIL_COLUMNS)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_format_value(row[c]) for c in columns) + "\n")


def run_sweep(config, out_dir=".", workers: int = 1,
              seed_override: int | None = None):
    """Run every sweep point (skipping completed ones) and write summary.csv."""
    raw = load_raw_config(config) if not isinstance(config, dict) else copy.deepcopy(config)
    points, sweep_fields = sweep_points(raw)
    os.makedirs(out_dir, exist_ok=True)

    rows = []
    for point in points:
        name = point_name(raw["task"], point)
        results_path = os.path.join(out_dir, f"{name}.json")
        if not os.path.exists(results_path):
            cfg = resolve_config(point["raw"])
            run_experiment(cfg, out_dir=out_dir, workers=workers,
                           seed_override=seed_override, name=name)
        with open(results_path, "r", encoding="ascii") as fh:
            doc = json.load(fh)
        timing_path = os.path.join(out_dir, f"{name}.timing.json")
        mean_epoch = None
        if os.path.exists(timing_path):
            with open(timing_path, "r", encoding="ascii") as fh:
                mean_epoch = json.load(fh).get("mean_epoch_seconds")
        row = {
            "task": doc["config"]["task"],
            "cell": doc["config"]["cell"],
            "k": doc["resolved"]["k"],
            "param_count": doc["resolved"]["param_count"],
            "mean_metric": doc["aggregates"]["mean_metric"],
            "std_metric": doc["aggregates"]["std_metric"],
            "mean_epoch_seconds": mean_epoch,
        }
        row.update(point["values"])
        rows.append(row)

    summary_path = os.path.join(out_dir, "summary.csv")
    write_summary_csv(rows, sweep_fields, summary_path)
    return summary_path
