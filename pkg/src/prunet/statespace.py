"""Executable discrete-time state-space systems in two forms, the
product-space conversion between them, and sampled equivalence testing.

A type-I system reads y_t = G(x_t, s_t): the output may use the current
input directly. A type-II system reads y_t = G(s_t) only. Both evolve
s_t = F(x_t, s_{t-1}) from s_0 = 0. Any type-I system converts to an
observationally equivalent type-II system over the product state space
(input slot, original state), at the cost of m extra state dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class TypeISystem:
    """System with transition s' = F(x, s) and output y = G(x, s)."""

    state_dim: int
    input_dim: int
    output_dim: int
    transition: Callable[[np.ndarray, np.ndarray], np.ndarray]
    output: Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TypeIISystem:
    """System whose output y = G(s) depends on the state alone."""

    state_dim: int
    input_dim: int
    output_dim: int
    transition: Callable[[np.ndarray, np.ndarray], np.ndarray]
    output: Callable[[np.ndarray], np.ndarray]


def run(system, xs) -> list:
    """Drive a system from the zero state; returns one output per input."""
    state = np.zeros(system.state_dim)
    outputs = []
    for t, x in enumerate(xs, start=1):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (system.input_dim,):
            raise ShapeError(
                f"at time step {t}: input shape {x.shape}, "
                f"expected ({system.input_dim},)"
            )
        state = np.asarray(system.transition(x, state), dtype=np.float64)
        if state.shape != (system.state_dim,):
            raise ShapeError(
                f"at time step {t}: transition returned shape {state.shape}, "
                f"expected ({system.state_dim},)"
            )
        if isinstance(system, TypeIISystem):
            y = system.output(state)
        else:
            y = system.output(x, state)
        outputs.append(np.asarray(y, dtype=np.float64))
    return outputs


def convert_to_type2(system: TypeISystem) -> TypeIISystem:
    """Rewrite a type-I system over the product state space (input, state).

    The new state stores the input that produced it alongside the evolved
    original state, so the output map can read the stored input instead of
    the live one. The stored slot holds the *current* input (an all-zero
    slot would break equivalence whenever G uses x). Output sequences
    match the original system on every input sequence.
    """
    m = system.input_dim
    k = system.state_dim

    def transition(x, aug):
        inner = system.transition(x, aug[m:])
        return np.concatenate([x, inner])

    def output(aug):
        return system.output(aug[:m], aug[m:])

    return TypeIISystem(
        state_dim=m + k,
        input_dim=m,
        output_dim=system.output_dim,
        transition=transition,
        output=output,
    )


def equivalent(a, b, trials: int, t_max: int, rng: np.random.Generator,
               tol: float = 1e-12):
    """Empirical equivalence over sampled N(0,1) input sequences.

    Returns (True, None) when every sampled sequence produces outputs
    agreeing within tol component-wise, else (False, prefix) where prefix
    is the shortest failing input prefix found.
    """
    if a.input_dim != b.input_dim or a.output_dim != b.output_dim:
        raise ShapeError(
            f"systems not comparable: inputs {a.input_dim} vs {b.input_dim}, "
            f"outputs {a.output_dim} vs {b.output_dim}"
        )
    counterexample = None
    for _ in range(trials):
        t_len = int(rng.integers(1, t_max + 1))
        xs = [rng.normal(size=a.input_dim) for _ in range(t_len)]
        ya = run(a, xs)
        yb = run(b, xs)
        for t in range(t_len):
            if np.max(np.abs(ya[t] - yb[t])) > tol:
                prefix = xs[:t + 1]
                if counterexample is None or len(prefix) < len(counterexample):
                    counterexample = prefix
                break
    if counterexample is None:
        return True, None
    return False, counterexample
