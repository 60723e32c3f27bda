"""Experiment config files: TOML with per-task sections, strictly
validated (unknown keys are errors, required keys named on failure).

A config describes one experiment; list values in sweepable fields turn
it into a sweep (see :mod:`prunet.harness.sweep`). Exhaustive commented
examples for every task live in the repository's configs/ directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .. import cells, numerics
from ..errors import ConfigError

TASKS = ("memorization", "adding", "charpred", "mnist")

# fields that may hold a list of values in a sweep config
SWEEPABLE_TOP = ("cell", "k", "target_param_count")
SWEEPABLE_TASK_PARAMS = ("I", "N", "delta2")

_INT = (int,)
_NUM = (int, float)
_STR = (str,)

# top-level schema: key -> (types, required)
_TOP_SCHEMA = {
    "task": (_STR, True),
    "cell": (_STR, True),
    "layers": (_INT, False),
    "k": (_INT, False),
    "target_param_count": (_INT, False),
    "restarts": (_INT, False),
    "seed": (_INT, True),
    "train_count": (_INT, False),
    "test_count": (_INT, False),
    "init_scale": (_NUM, False),
    "task_params": ((dict,), True),
    "optimizer": ((dict,), True),
}

_TASK_PARAM_SCHEMA = {
    "memorization": {"I": (_INT, True), "N": (_INT, True), "delta2": (_NUM, True)},
    "adding": {"N": (_INT, True), "delta2": (_NUM, True)},
    "charpred": {
        "corpus": (_STR, True),
        "chunk_len": (_INT, False),
        "train_fraction": (_NUM, False),
    },
    "mnist": {
        "train_images": (_STR, True),
        "train_labels": (_STR, True),
        "test_images": (_STR, True),
        "test_labels": (_STR, True),
    },
}

_OPT_SCHEMA = {
    "sgd": {
        "kind": (_STR, True),
        "batch_size": (_INT, True),
        "epochs": (_INT, True),
        "learning_rate": (_NUM, True),
    },
    "adadelta": {
        "kind": (_STR, True),
        "batch_size": (_INT, True),
        "epochs": (_INT, True),
        "base_lr": (_NUM, True),
        "rho": (_NUM, False),
        "epsilon": (_NUM, False),
    },
}

# tasks that score only the final output vs. every step
_EMIT_BY_TASK = {
    "memorization": cells.FINAL_ONLY,
    "adding": cells.FINAL_ONLY,
    "charpred": cells.EVERY_STEP,
    "mnist": cells.FINAL_ONLY,
}

_DEFAULT_LAYERS = {"memorization": 1, "adding": 1, "charpred": 2, "mnist": 2}

_READOUT_BY_TASK = {
    "memorization": numerics.IDENTITY,
    "adding": numerics.IDENTITY,
    "charpred": numerics.SOFTMAX,
    "mnist": numerics.SOFTMAX,
}

_METRIC_BY_TASK = {
    "memorization": "mse",
    "adding": "mse",
    "charpred": "cel",
    "mnist": "accuracy",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully scalar experiment description.

    k may be None when target_param_count drives the state dimension; the
    runner resolves it once the input/output dims are known (the charpred
    alphabet size comes from the corpus).
    """

    task: str
    cell: str
    layers: int
    k: int | None
    target_param_count: int | None
    restarts: int
    seed: int
    train_count: int | None
    test_count: int | None
    init_scale: float = 1.0
    task_params: dict = field(repr=False, default_factory=dict)
    optimizer: dict = field(repr=False, default_factory=dict)

    @property
    def emit(self) -> str:
        return _EMIT_BY_TASK[self.task]

    @property
    def readout_activation(self) -> str:
        return _READOUT_BY_TASK[self.task]

    @property
    def metric_name(self) -> str:
        return _METRIC_BY_TASK[self.task]

    def echo(self) -> dict:
        """Plain-dict form for embedding in results documents."""
        return {
            "task": self.task,
            "cell": self.cell,
            "layers": self.layers,
            "k": self.k,
            "target_param_count": self.target_param_count,
            "restarts": self.restarts,
            "seed": self.seed,
            "train_count": self.train_count,
            "test_count": self.test_count,
            "init_scale": self.init_scale,
            "task_params": dict(self.task_params),
            "optimizer": dict(self.optimizer),
        }


def load_raw_config(path) -> dict:
    """Parse a TOML config file; raises ConfigError on syntax errors."""
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config {path} is not valid TOML: {e}") from e


def _check_keys(section: dict, schema: dict, where: str, sweepable=()):
    for key in section:
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} in {where}")
    for key, (types, required) in schema.items():
        if key not in section:
            if required:
                raise ConfigError(f"missing required key {key!r} in {where}")
            continue
        value = section[key]
        if isinstance(value, list):
            if key not in sweepable:
                raise ConfigError(f"key {key!r} in {where} cannot hold a list")
            if not value:
                raise ConfigError(f"sweep list for {key!r} in {where} is empty")
            for v in value:
                if not isinstance(v, types) or isinstance(v, bool):
                    raise ConfigError(
                        f"bad value {v!r} in sweep list {key!r} in {where}"
                    )
        elif not isinstance(value, types) or isinstance(value, bool):
            raise ConfigError(
                f"key {key!r} in {where} has type {type(value).__name__}, "
                f"expected {'/'.join(t.__name__ for t in types)}"
            )


def validate_raw(raw: dict, allow_lists: bool = False) -> None:
    """Structural validation of a parsed config (lists only when sweeping)."""
    top_sweep = SWEEPABLE_TOP if allow_lists else ()
    task_sweep = SWEEPABLE_TASK_PARAMS if allow_lists else ()
    _check_keys(raw, _TOP_SCHEMA, "config", sweepable=top_sweep)

    task = raw["task"]
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")

    cell_values = raw["cell"] if isinstance(raw["cell"], list) else [raw["cell"]]
    for c in cell_values:
        if c not in cells.CELL_KINDS:
            raise ConfigError(f"unknown cell {c!r}; expected one of {cells.CELL_KINDS}")

    _check_keys(raw["task_params"], _TASK_PARAM_SCHEMA[task],
                f"task_params ({task})", sweepable=task_sweep)

    opt = raw["optimizer"]
    kind = opt.get("kind")
    if kind not in _OPT_SCHEMA:
        raise ConfigError(
            f"optimizer kind must be one of {tuple(_OPT_SCHEMA)}, got {kind!r}"
        )
    _check_keys(opt, _OPT_SCHEMA[kind], f"optimizer ({kind})")

    has_k = "k" in raw
    has_target = "target_param_count" in raw
    if has_k == has_target:
        raise ConfigError("exactly one of 'k' and 'target_param_count' is required")


def resolve_config(raw: dict) -> ExperimentConfig:
    """Validate a scalar (non-sweep) config and build ExperimentConfig."""
    validate_raw(raw, allow_lists=False)
    task = raw["task"]
    tp = dict(raw["task_params"])
    opt = dict(raw["optimizer"])

    layers = raw.get("layers", _DEFAULT_LAYERS[task])
    if layers not in (1, 2):
        raise ConfigError(f"layers must be 1 or 2, got {layers}")
    restarts = raw.get("restarts", 1)
    if restarts < 1:
        raise ConfigError(f"restarts must be >= 1, got {restarts}")

    for name in ("train_count", "test_count"):
        if task in ("memorization", "adding") and name not in raw:
            raise ConfigError(f"{task} requires {name!r}")
        if raw.get(name, 1) < 1:
            raise ConfigError(f"{name} must be >= 1")

    if task == "memorization":
        if tp["I"] < 1 or tp["N"] < 0 or tp["delta2"] < 0:
            raise ConfigError(
                f"memorization needs I >= 1, N >= 0, delta2 >= 0; got {tp}"
            )
    elif task == "adding":
        if tp["N"] < 2 or tp["delta2"] < 0:
            raise ConfigError(f"adding needs N >= 2, delta2 >= 0; got {tp}")
    elif task == "charpred":
        tp.setdefault("chunk_len", 50)
        tp.setdefault("train_fraction", 0.9)
        if tp["chunk_len"] < 2 or not 0.0 < tp["train_fraction"] < 1.0:
            raise ConfigError(
                f"charpred needs chunk_len >= 2 and train_fraction in (0, 1); got {tp}"
            )

    if opt["batch_size"] < 1 or opt["epochs"] < 1:
        raise ConfigError("optimizer batch_size and epochs must be >= 1")
    if opt["kind"] == "sgd":
        if opt["learning_rate"] <= 0:
            raise ConfigError("sgd learning_rate must be positive")
    else:
        opt.setdefault("rho", 0.95)
        opt.setdefault("epsilon", 1e-6)
        if opt["base_lr"] <= 0 or not 0 < opt["rho"] < 1 or opt["epsilon"] <= 0:
            raise ConfigError("adadelta needs base_lr > 0, rho in (0,1), epsilon > 0")

    k = raw.get("k")
    target = raw.get("target_param_count")
    if k is not None and k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if target is not None and target < 1:
        raise ConfigError(f"target_param_count must be >= 1, got {target}")
    init_scale = raw.get("init_scale", 1.0)
    if init_scale <= 0:
        raise ConfigError(f"init_scale must be positive, got {init_scale}")

    return ExperimentConfig(
        task=task,
        cell=raw["cell"],
        layers=layers,
        k=k,
        target_param_count=target,
        restarts=restarts,
        seed=raw["seed"],
        train_count=raw.get("train_count"),
        test_count=raw.get("test_count"),
        init_scale=float(init_scale),
        task_params=tp,
        optimizer=opt,
    )
