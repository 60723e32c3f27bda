"""Experiment execution: data preparation, seeded multi-restart training,
evaluation, and persisted results.

Seeds derive deterministically from the config seed: the dataset uses it
directly, restart i trains from seeded_rng(seed + i). Results are written
as a JSON document whose bytes depend only on (config, seed); wall-clock
timings go to a separate .timing.json sidecar so the main document stays
byte-reproducible.
"""

from __future__ import annotations

import dataclasses
import json
import multiprocessing
import os
import time
from dataclasses import dataclass

import numpy as np

from .. import cells, optim, tasks
from ..errors import ConfigError, DataError, NumericError
from .config import ExperimentConfig, load_raw_config, resolve_config

RESULTS_SCHEMA_VERSION = 1
_EVAL_BATCH = 512


@dataclass(frozen=True)
class TaskData:
    """Prepared arrays for one task, shared by every restart."""

    task: str
    input_dim: int
    output_dim: int
    loss_kind: str
    target_kind: str
    train_inputs: np.ndarray   # (count, T, m) float64, or (count, T) int indices
    train_targets: np.ndarray
    test_inputs: np.ndarray
    test_targets: np.ndarray

    @property
    def train_count(self) -> int:
        return self.train_inputs.shape[0]

    @property
    def test_count(self) -> int:
        return self.test_inputs.shape[0]


@dataclass(frozen=True)
class RestartOutcome:
    index: int
    seed: int
    failed: bool
    error: str | None
    final_metric: float | None
    train_loss: list
    epoch_seconds: list


def _instances_to_arrays(instances):
    xs = np.stack([inst.inputs for inst in instances])
    if isinstance(instances[0], tasks.MemorizationInstance):
        ys = np.stack([inst.target for inst in instances])
    else:
        ys = np.array([inst.target for inst in instances])
    return xs, ys


def prepare_data(config: ExperimentConfig) -> TaskData:
    """Generate or load the datasets named by the config (once per run)."""
    tp = config.task_params
    if config.task == "memorization":
        rng = tasks.seeded_rng(config.seed)
        train = tasks.gen_memorization(tp["I"], tp["N"], tp["delta2"],
                                       config.train_count, rng)
        test = tasks.gen_memorization(tp["I"], tp["N"], tp["delta2"],
                                      config.test_count, rng)
        train_x, train_y = _instances_to_arrays(train)
        test_x, test_y = _instances_to_arrays(test)
        return TaskData(
            task=config.task, input_dim=1, output_dim=tp["I"],
            loss_kind=optim.MSE, target_kind=optim.VECTOR_TARGET,
            train_inputs=train_x, train_targets=train_y,
            test_inputs=test_x, test_targets=test_y,
        )
    if config.task == "adding":
        rng = tasks.seeded_rng(config.seed)
        train = tasks.gen_adding(tp["N"], tp["delta2"], config.train_count, rng)
        test = tasks.gen_adding(tp["N"], tp["delta2"], config.test_count, rng)
        train_x, train_y = _instances_to_arrays(train)
        test_x, test_y = _instances_to_arrays(test)
        return TaskData(
            task=config.task, input_dim=2, output_dim=1,
            loss_kind=optim.MSE, target_kind=optim.SCALAR_TARGET,
            train_inputs=train_x, train_targets=train_y,
            test_inputs=test_x, test_targets=test_y,
        )
    if config.task == "charpred":
        corpus = tasks.load_char_corpus(tp["corpus"], tp["train_fraction"])
        train_lines, test_lines = corpus.split()
        train_chunks = tasks.chunk_sequences(train_lines, tp["chunk_len"])
        test_chunks = tasks.chunk_sequences(test_lines, tp["chunk_len"])
        if config.train_count is not None:
            train_chunks = train_chunks[:config.train_count]
        if config.test_count is not None:
            test_chunks = test_chunks[:config.test_count]
        if not train_chunks or not test_chunks:
            raise DataError(
                f"corpus {tp['corpus']} yields {len(train_chunks)} train / "
                f"{len(test_chunks)} test chunks of length {tp['chunk_len']}; "
                "lower chunk_len or use a larger corpus"
            )
        k_sym = corpus.alphabet_size
        return TaskData(
            task=config.task, input_dim=k_sym, output_dim=k_sym,
            loss_kind=optim.CEL, target_kind=optim.STEP_CLASS_TARGET,
            train_inputs=np.stack(train_chunks), train_targets=np.empty(0),
            test_inputs=np.stack(test_chunks), test_targets=np.empty(0),
        )
    if config.task == "mnist":
        train = tasks.load_mnist_idx(tp["train_images"], tp["train_labels"])
        test = tasks.load_mnist_idx(tp["test_images"], tp["test_labels"])
        n_train = config.train_count or len(train)
        n_test = config.test_count or len(test)
        if n_train > len(train) or n_test > len(test):
            raise DataError(
                f"requested {n_train}/{n_test} examples, files hold "
                f"{len(train)}/{len(test)}"
            )
        return TaskData(
            task=config.task, input_dim=28, output_dim=10,
            loss_kind=optim.CEL, target_kind=optim.CLASS_TARGET,
            train_inputs=train.images[:n_train],
            train_targets=train.labels[:n_train].astype(np.float64),
            test_inputs=test.images[:n_test],
            test_targets=test.labels[:n_test].astype(np.float64),
        )
    raise ConfigError(f"unknown task {config.task!r}")


def _one_hot_block(chunks: np.ndarray, k_sym: int):
    """(B, L) index chunks -> ((L-1, K, B) one-hot inputs, (L-1, B) targets)."""
    b, length = chunks.shape
    t_len = length - 1
    inp = chunks[:, :-1].T
    onehot = np.zeros((t_len, k_sym, b))
    onehot[np.arange(t_len)[:, None], inp, np.arange(b)[None, :]] = 1.0
    return onehot, chunks[:, 1:].T.astype(np.float64)


def make_batch(data: TaskData, idx: np.ndarray) -> optim.SequenceBatch:
    """Assemble the (T, m, batch) block for the selected examples."""
    if data.task == "memorization":
        return optim.SequenceBatch(
            inputs=data.train_inputs[idx].transpose(1, 2, 0),
            targets=data.train_targets[idx].T,
            target_kind=data.target_kind,
        )
    if data.task == "adding":
        return optim.SequenceBatch(
            inputs=data.train_inputs[idx].transpose(1, 2, 0),
            targets=data.train_targets[idx],
            target_kind=data.target_kind,
        )
    if data.task == "charpred":
        onehot, targets = _one_hot_block(data.train_inputs[idx], data.input_dim)
        return optim.SequenceBatch(
            inputs=onehot, targets=targets, target_kind=data.target_kind,
        )
    # mnist: rows are time steps
    return optim.SequenceBatch(
        inputs=data.train_inputs[idx].transpose(1, 2, 0),
        targets=data.train_targets[idx],
        target_kind=data.target_kind,
    )


def _test_batch(data: TaskData, lo: int, hi: int) -> optim.SequenceBatch:
    idx = np.arange(lo, hi)
    if data.task == "charpred":
        onehot, targets = _one_hot_block(data.test_inputs[idx], data.input_dim)
        return optim.SequenceBatch(
            inputs=onehot, targets=targets, target_kind=data.target_kind,
        )
    if data.task == "memorization":
        targets = data.test_targets[idx].T
    else:
        targets = data.test_targets[idx]
    return optim.SequenceBatch(
        inputs=data.test_inputs[idx].transpose(1, 2, 0),
        targets=targets, target_kind=data.target_kind,
    )


def evaluate(model: cells.Model, data: TaskData) -> float:
    """Held-out metric: final-step MSE, per-step CEL, or accuracy."""
    total = 0.0
    count = data.test_count
    hits = 0
    for lo in range(0, count, _EVAL_BATCH):
        hi = min(lo + _EVAL_BATCH, count)
        batch = _test_batch(data, lo, hi)
        if data.task == "mnist":
            outputs, _, _ = optim.forward_batch(model, batch.inputs, cells.FINAL_ONLY)
            pred = np.argmax(outputs[-1], axis=0)
            hits += int(np.sum(pred == batch.targets.astype(int)))
        else:
            loss = optim.batch_loss(model, batch, data.loss_kind)
            total += loss * (hi - lo)
    if data.task == "mnist":
        return hits / count
    return total / count


def resolve_state_dim(config: ExperimentConfig, data: TaskData) -> int:
    if config.k is not None:
        return config.k
    return cells.match_dim_for_params(
        config.cell, config.target_param_count, data.input_dim, data.output_dim
    )


def _init_model(config, data, k, rng) -> cells.Model:
    scheme = "gaussian" if config.task in ("memorization", "adding") else "uniform"
    return optim.init_model(
        config.cell, config.layers, k, data.input_dim, data.output_dim,
        config.readout_activation, scheme, rng, scale=config.init_scale,
    )


def train_restart(config: ExperimentConfig, data: TaskData, k: int,
                  index: int) -> RestartOutcome:
    """One seeded training run; never raises on numeric blow-up."""
    seed = config.seed + index
    rng = tasks.seeded_rng(seed)
    model = _init_model(config, data, k, rng)
    opt = config.optimizer
    if opt["kind"] == "adadelta":
        ada = optim.AdadeltaState(model, rho=opt["rho"], eps=opt["epsilon"],
                                  base_lr=opt["base_lr"])
    batch_size = opt["batch_size"]
    count = data.train_count
    train_loss, epoch_seconds = [], []
    try:
        for _ in range(opt["epochs"]):
            order = rng.permutation(count)
            loss_sum = 0.0
            started = time.perf_counter()
            for lo in range(0, count, batch_size):
                idx = order[lo:lo + batch_size]
                batch = make_batch(data, idx)
                loss, grads = optim.bptt(model, batch, data.loss_kind)
                if opt["kind"] == "sgd":
                    model = optim.sgd_step(model, grads, opt["learning_rate"])
                else:
                    model = optim.adadelta_step(ada, model, grads)
                loss_sum += loss * idx.size
            epoch_seconds.append(time.perf_counter() - started)
            train_loss.append(loss_sum / count)
        metric = evaluate(model, data)
        if not np.isfinite(metric):
            raise NumericError(f"non-finite test metric {metric}")
    except NumericError as e:
        return RestartOutcome(index=index, seed=seed, failed=True, error=str(e),
                              final_metric=None, train_loss=train_loss,
                              epoch_seconds=epoch_seconds)
    return RestartOutcome(index=index, seed=seed, failed=False, error=None,
                          final_metric=float(metric), train_loss=train_loss,
                          epoch_seconds=epoch_seconds)


def _restart_worker(args):
    config, data, k, index = args
    return train_restart(config, data, k, index)


def _write_json_atomic(doc: dict, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def default_result_name(config: ExperimentConfig) -> str:
    return f"{config.task}_{config.cell}"


def run_experiment(config, out_dir=".", workers: int = 1,
                   seed_override: int | None = None, name: str | None = None):
    """Run all restarts of one experiment and persist the results.

    `config` is a config file path, a raw dict, or an ExperimentConfig.
    Returns the results JSON path; per-epoch wall times go to a
    .timing.json sidecar next to it.
    """
    if not isinstance(config, ExperimentConfig):
        raw = load_raw_config(config) if not isinstance(config, dict) else config
        config = resolve_config(raw)
    if seed_override is not None:
        config = dataclasses.replace(config, seed=seed_override)
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")

    data = prepare_data(config)
    k = resolve_state_dim(config, data)
    param_count = cells.count_params(config.cell, k, data.input_dim, data.output_dim)

    specs = [(config, data, k, i) for i in range(1, config.restarts + 1)]
    if workers == 1 or config.restarts == 1:
        outcomes = [_restart_worker(s) for s in specs]
    else:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(min(workers, config.restarts)) as pool:
            outcomes = pool.map(_restart_worker, specs)

    finals = [o.final_metric for o in outcomes if not o.failed]
    aggregates = {
        "completed": len(finals),
        "failed": len(outcomes) - len(finals),
        "mean_metric": float(np.mean(finals)) if finals else None,
        "std_metric": float(np.std(finals)) if finals else None,
    }
    doc = {
        "schema_version": RESULTS_SCHEMA_VERSION,
        "config": config.echo(),
        "resolved": {
            "k": k,
            "param_count": param_count,
            "input_dim": data.input_dim,
            "output_dim": data.output_dim,
            "emit": config.emit,
            "metric": config.metric_name,
        },
        "restarts": [
            {
                "index": o.index,
                "seed": o.seed,
                "failed": o.failed,
                "error": o.error,
                "final_metric": o.final_metric,
                "train_loss": [float(v) for v in o.train_loss],
            }
            for o in outcomes
        ],
        "aggregates": aggregates,
    }
    os.makedirs(out_dir, exist_ok=True)
    stem = name or default_result_name(config)
    results_path = os.path.join(out_dir, f"{stem}.json")
    _write_json_atomic(doc, results_path)

    epoch_seconds = [list(map(float, o.epoch_seconds)) for o in outcomes]
    flat = [s for series in epoch_seconds for s in series]
    timing_doc = {
        "schema_version": RESULTS_SCHEMA_VERSION,
        "epoch_seconds": epoch_seconds,
        "mean_epoch_seconds": float(np.mean(flat)) if flat else None,
    }
    _write_json_atomic(timing_doc, os.path.join(out_dir, f"{stem}.timing.json"))
    return results_path
