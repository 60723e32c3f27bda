"""Dry-run the four memorization trend sweeps at reduced restart count and
report per-cell Spearman correlations, to validate the shipped sweep
configs before freezing them."""

import json
import sys

import numpy as np

from prunet.harness import runner
from prunet.harness.config import resolve_config
from prunet.harness.reporting import spearman_rho

BASE = {
    "task": "memorization",
    "restarts": 3,
    "seed": 1000,
    "train_count": 5000,
    "test_count": 1000,
    "optimizer": {"kind": "sgd", "batch_size": 50, "epochs": 400,
                  "learning_rate": 0.05},
}

SWEEPS = {
    "I": {"values": [1, 2, 4], "fixed": {"N": 5, "delta2": 1.0}, "k": 2, "sign": +1},
    "N": {"values": [5, 10, 20], "fixed": {"I": 2, "delta2": 1.0}, "k": 3, "sign": +1},
    "delta2": {"values": [0.25, 1.0, 4.0], "fixed": {"I": 2, "N": 10}, "k": 3, "sign": +1},
    "k": {"values": [1, 2, 4], "fixed": {"I": 2, "N": 5, "delta2": 1.0}, "k": None, "sign": -1},
}


def main():
    which = sys.argv[1:] or list(SWEEPS)
    summary = {}
    for name in which:
        spec = SWEEPS[name]
        for cell in ["PRU", "GRU", "LSTM"]:
            xs, ys = [], []
            means = []
            for value in spec["values"]:
                raw = json.loads(json.dumps(BASE))
                raw["cell"] = cell
                tp = dict(spec["fixed"])
                if name != "k":
                    tp[name] = value
                    raw["k"] = spec["k"]
                else:
                    raw["k"] = value
                raw["task_params"] = tp
                cfg = resolve_config(raw)
                data = runner.prepare_data(cfg)
                kk = runner.resolve_state_dim(cfg, data)
                finals = []
                for i in range(1, cfg.restarts + 1):
                    out = runner.train_restart(cfg, data, kk, i)
                    finals.append(out.final_metric if not out.failed else float("nan"))
                means.append(float(np.mean(finals)))
                xs += [value] * len(finals)
                ys += finals
                print(f"  {name} sweep {cell} {name}={value}: "
                      f"finals={[f'{v:.4f}' for v in finals]}", flush=True)
            rho = spearman_rho(xs, ys)
            mean_rho = spearman_rho(spec["values"], means)
            ok = (rho * spec["sign"] >= 0.8)
            summary[(name, cell)] = (rho, mean_rho, ok)
            print(f"{name} sweep {cell}: per-restart rho={rho:+.3f} "
                  f"mean rho={mean_rho:+.3f} means={[f'{v:.4f}' for v in means]} "
                  f"{'OK' if ok else 'WEAK'}", flush=True)
    print("\n=== summary ===")
    for (name, cell), (rho, mean_rho, ok) in summary.items():
        print(f"{name:7s} {cell:5s} rho={rho:+.3f} mean_rho={mean_rho:+.3f} "
              f"{'OK' if ok else 'WEAK'}")


if __name__ == "__main__":
    main()
