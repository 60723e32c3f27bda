"""Repository-wide numerical verification suites.

gradcheck: every (cell kind x loss x stack depth) combination's analytic
BPTT gradient is compared against the central finite-difference oracle
at random parameter points. lemma1: random type-I systems are converted
to type-II form and checked for observational equivalence on sampled
sequences. Both suites are exposed through the CLI and reused verbatim
by the acceptance tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cells, numerics, optim, statespace, tasks

GRADCHECK_TOL = 1e-5
GRADCHECK_EPS = 1e-6
LEMMA1_TOL = 1e-12


@dataclass(frozen=True)
class GradCheckResult:
    cell: str
    loss: str
    layers: int
    points: int
    max_rel_err: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < GRADCHECK_TOL

    def describe(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] {self.cell} {self.loss} layers={self.layers} "
            f"points={self.points} max_rel_err={self.max_rel_err:.3e}"
        )


def _random_model(kind, layers, k, m, l, h, rng):
    layer_params = []
    in_dim = m
    for _ in range(layers):
        cell, readout = optim.init_gaussian(kind, k, in_dim, l, h, rng)
        layer_params.append(cell)
        in_dim = k
    return cells.Model(
        kinds=(kind,) * layers, layers=tuple(layer_params), readout=readout
    )


def _random_batch(loss_kind, t_len, m, l, batch, rng):
    inputs = rng.normal(size=(t_len, m, batch))
    if loss_kind == optim.MSE:
        return optim.SequenceBatch(
            inputs=inputs,
            targets=rng.normal(size=(l, batch)),
            target_kind=optim.VECTOR_TARGET,
        )
    return optim.SequenceBatch(
        inputs=inputs,
        targets=rng.integers(0, l, size=(t_len, batch)).astype(np.float64),
        target_kind=optim.STEP_CLASS_TARGET,
    )


def gradcheck_combo(kind: str, loss_kind: str, layers: int, points: int,
                    rng: np.random.Generator) -> GradCheckResult:
    """Worst relative error over random points for one configuration."""
    h = numerics.IDENTITY if loss_kind == optim.MSE else numerics.SOFTMAX
    worst = 0.0
    for _ in range(points):
        k = int(rng.integers(1, 5))
        m = int(rng.integers(1, 4))
        l = int(rng.integers(1, 4)) if loss_kind == optim.MSE else int(rng.integers(2, 5))
        t_len = int(rng.integers(1, 9))
        batch = int(rng.integers(1, 4))
        model = _random_model(kind, layers, k, m, l, h, rng)
        batch_data = _random_batch(loss_kind, t_len, m, l, batch, rng)
        _, grads = optim.bptt(model, batch_data, loss_kind)
        analytic = optim.flatten_grads(grads)

        def loss_at(flat):
            return optim.batch_loss(
                optim.unflatten_model(flat, model), batch_data, loss_kind
            )

        fd = numerics.finite_diff_grad(loss_at, optim.flatten_model(model), GRADCHECK_EPS)
        rel = np.max(np.abs(analytic - fd) / np.maximum(1.0, np.abs(fd)))
        worst = max(worst, float(rel))
    return GradCheckResult(kind, loss_kind, layers, points, worst)


def run_gradcheck(points: int = 20, seed: int = 20240, verbose: bool = True) -> list:
    """All 12 combinations; returns the per-combination results."""
    rng = tasks.seeded_rng(seed)
    results = []
    for kind in cells.CELL_KINDS:
        for loss_kind in (optim.MSE, optim.CEL):
            for layers in (1, 2):
                res = gradcheck_combo(kind, loss_kind, layers, points, rng)
                results.append(res)
                if verbose:
                    print(res.describe())
    return results


# ---------------------------------------------------------------------------
# type-I -> type-II conversion checks
# ---------------------------------------------------------------------------


def random_type1_system(rng: np.random.Generator, k_max: int = 3,
                        m_max: int = 2, l_max: int = 2) -> statespace.TypeISystem:
    """A type-I system whose F and G are small random one-hidden-layer MLPs."""
    k = int(rng.integers(1, k_max + 1))
    m = int(rng.integers(1, m_max + 1))
    l = int(rng.integers(1, l_max + 1))
    hidden = int(rng.integers(3, 7))
    w1_f = rng.normal(size=(hidden, m + k))
    b1_f = rng.normal(size=hidden)
    w2_f = rng.normal(size=(k, hidden))
    b2_f = rng.normal(size=k)
    w1_g = rng.normal(size=(hidden, m + k))
    b1_g = rng.normal(size=hidden)
    w2_g = rng.normal(size=(l, hidden))
    b2_g = rng.normal(size=l)

    def transition(x, s):
        return w2_f @ np.tanh(w1_f @ np.concatenate([x, s]) + b1_f) + b2_f

    def output(x, s):
        return w2_g @ np.tanh(w1_g @ np.concatenate([x, s]) + b1_g) + b2_g

    return statespace.TypeISystem(
        state_dim=k, input_dim=m, output_dim=l,
        transition=transition, output=output,
    )


def run_lemma1(n_systems: int = 50, trials: int = 100, t_max: int = 10,
               seed: int = 31337, verbose: bool = True) -> list:
    """Convert random type-I systems and test sampled equivalence.

    Returns a list of (system index, equivalent?, state dims) tuples.
    """
    rng = tasks.seeded_rng(seed)
    results = []
    for i in range(n_systems):
        sys1 = random_type1_system(rng)
        sys2 = statespace.convert_to_type2(sys1)
        ok, counterexample = statespace.equivalent(
            sys1, sys2, trials=trials, t_max=t_max, rng=rng, tol=LEMMA1_TOL
        )
        results.append((i, ok, sys1.state_dim, sys2.state_dim))
        if verbose:
            status = "PASS" if ok else "FAIL"
            extra = "" if ok else f" (counterexample length {len(counterexample)})"
            print(
                f"[{status}] system {i}: k={sys1.state_dim} m={sys1.input_dim} "
                f"-> converted k={sys2.state_dim}{extra}"
            )
    return results
