"""Config-driven experiment harness: seeded multi-restart training runs,
parameter sweeps, timing tables, and plot-data export."""

from .config import ExperimentConfig, load_raw_config, resolve_config
from .runner import run_experiment
from .sweep import run_sweep
from .reporting import export_plotdata, timing_report

__all__ = [
    "ExperimentConfig",
    "load_raw_config",
    "resolve_config",
    "run_experiment",
    "run_sweep",
    "timing_report",
    "export_plotdata",
]
