"""Recurrent cells (PRU, LSTM, GRU), the linear readout, sequence
unrolling, layer stacking, and parameter accounting.

Step functions come in two flavours that share one kernel: the public
vector form takes a single state/input pair, and the batch form takes
(dim, batch) matrices whose columns are independent sequences. Each
step returns its new state plus a cache of intermediate activations for
the exact backward pass in :mod:`prunet.optim`.

Cell equations:

* PRU: u = tanh(U_s s + U_x x + b_u); c = sigmoid(C_s s + C_x x + b_c);
  s' = c * s + (1 - c) * u. The carry gate c interpolates between the
  old state and the bounded candidate, so states stay in [-1, 1]^k.
* LSTM: the gates i, f, o are sigmoids over the concatenation
  [c_prev, h_prev, x] (the cell vector is deliberately part of the gate
  input), the candidate is tanh over [h_prev, x], c' = i*cand + f*c_prev,
  h' = o * tanh(c'). The unit output is h only.
* GRU: z = sigmoid(W_z [s, x] + b_z); r = sigmoid(W_r [s, x] + b_r);
  cand = tanh(W_h [r*s, x] + b_h); s' = z * s + (1 - z) * cand.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numerics
from .errors import DataError, ShapeError

PRU = "PRU"
LSTM = "LSTM"
GRU = "GRU"
CELL_KINDS = (PRU, LSTM, GRU)

FINAL_ONLY = "final_only"
EVERY_STEP = "every_step"

_KIND_TAGS = {PRU: 1, LSTM: 2, GRU: 3}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


@dataclass(frozen=True)
class PruParams:
    """PRU weights: candidate branch (u_s, u_x, b_u), carry gate (c_s, c_x, b_c)."""

    u_s: np.ndarray
    u_x: np.ndarray
    b_u: np.ndarray
    c_s: np.ndarray
    c_x: np.ndarray
    b_c: np.ndarray

    FIELDS = ("u_s", "u_x", "b_u", "c_s", "c_x", "b_c")

    @property
    def state_dim(self) -> int:
        return self.u_s.shape[0]

    @property
    def input_dim(self) -> int:
        return self.u_x.shape[1]


@dataclass(frozen=True)
class LstmParams:
    """LSTM weights; gate matrices take [c_prev, h_prev, x], w_c takes [h_prev, x]."""

    w_i: np.ndarray
    w_f: np.ndarray
    w_o: np.ndarray
    w_c: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray

    FIELDS = ("w_i", "w_f", "w_o", "w_c", "b_i", "b_f", "b_o", "b_g")

    @property
    def state_dim(self) -> int:
        return self.w_i.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_i.shape[1] - 2 * self.w_i.shape[0]


@dataclass(frozen=True)
class GruParams:
    """GRU weights; all three matrices take a [state, x] concatenation."""

    w_z: np.ndarray
    w_r: np.ndarray
    w_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    FIELDS = ("w_z", "w_r", "w_h", "b_z", "b_r", "b_h")

    @property
    def state_dim(self) -> int:
        return self.w_z.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_z.shape[1] - self.w_z.shape[0]


@dataclass(frozen=True)
class ReadoutParams:
    """Affine readout y = h(w @ s + b) applied to the (top-layer) state."""

    w: np.ndarray
    b: np.ndarray
    h: str = numerics.IDENTITY

    FIELDS = ("w", "b")

    @property
    def output_dim(self) -> int:
        return self.w.shape[0]


PARAM_CLASSES = {PRU: PruParams, LSTM: LstmParams, GRU: GruParams}


@dataclass(frozen=True)
class Model:
    """A stack of cell layers plus the readout on the top layer."""

    kinds: tuple
    layers: tuple
    readout: ReadoutParams

    def __post_init__(self):
        if len(self.kinds) != len(self.layers):
            raise ShapeError("one cell kind required per layer")


def true_state_dim(kind: str, k: int) -> int:
    """Actual state dimension for reported dimension k (2k for LSTM's (c, h) pair)."""
    return 2 * k if kind == LSTM else k


def zero_state(kind: str, k: int, batch: int | None = None):
    """Initial state at the origin; (c, h) pair for LSTM, single vector otherwise."""
    shape = (k,) if batch is None else (k, batch)
    if kind == LSTM:
        return (np.zeros(shape), np.zeros(shape))
    return np.zeros(shape)


def param_shapes(kind: str, k: int, m: int) -> dict:
    """Array shape per parameter field of the given cell kind."""
    if kind == PRU:
        return {
            "u_s": (k, k), "u_x": (k, m), "b_u": (k,),
            "c_s": (k, k), "c_x": (k, m), "b_c": (k,),
        }
    if kind == LSTM:
        return {
            "w_i": (k, 2 * k + m), "w_f": (k, 2 * k + m), "w_o": (k, 2 * k + m),
            "w_c": (k, k + m),
            "b_i": (k,), "b_f": (k,), "b_o": (k,), "b_g": (k,),
        }
    if kind == GRU:
        return {
            "w_z": (k, k + m), "w_r": (k, k + m), "w_h": (k, k + m),
            "b_z": (k,), "b_r": (k,), "b_h": (k,),
        }
    raise ValueError(f"unknown cell kind {kind!r}")


def count_params(kind: str, k: int, m: int, l: int) -> int:
    """Total scalar parameter count of one cell plus its readout."""
    if min(k, m, l) < 1:
        raise ValueError("k, m, l must all be >= 1")
    if kind == PRU:
        cell = 2 * k * k + 2 * k * m + 2 * k
    elif kind == LSTM:
        cell = 3 * k * (2 * k + m) + k * (k + m) + 4 * k
    elif kind == GRU:
        cell = 3 * k * (k + m) + 3 * k
    else:
        raise ValueError(f"unknown cell kind {kind!r}")
    return cell + l * k + l


def match_dim_for_params(kind: str, target: int, m: int, l: int) -> int:
    """Largest state dimension whose parameter count does not exceed target."""
    if target < count_params(kind, 1, m, l):
        raise ValueError(
            f"target {target} below minimum {count_params(kind, 1, m, l)} "
            f"for {kind} at m={m}, l={l}"
        )
    k = 1
    while count_params(kind, k + 1, m, l) <= target:
        k += 1
    return k


# ---------------------------------------------------------------------------
# step kernels (columns of the 2-D arrays are independent sequences)
# ---------------------------------------------------------------------------


def _check_step_shapes(kind, params, k, m, s_shape, x_shape):
    if s_shape[0] != k or x_shape[0] != m:
        raise ShapeError(
            f"{kind} step mismatch: params expect state {k}, input {m}; "
            f"got state {s_shape}, input {x_shape}"
        )


def pru_step_batch(p: PruParams, s_prev: np.ndarray, x: np.ndarray):
    _check_step_shapes(PRU, p, p.state_dim, p.input_dim, s_prev.shape, x.shape)
    two_d = s_prev.ndim == 2
    b_u = p.b_u[:, None] if two_d else p.b_u
    b_c = p.b_c[:, None] if two_d else p.b_c
    u = np.tanh(p.u_s @ s_prev + p.u_x @ x + b_u)
    c = numerics.sigmoid(p.c_s @ s_prev + p.c_x @ x + b_c)
    s = c * s_prev + (1.0 - c) * u
    cache = {"s_prev": s_prev, "x": x, "u": u, "c": c}
    return s, cache


def lstm_step_batch(p: LstmParams, state_prev, x: np.ndarray):
    c_prev, h_prev = state_prev
    k, m = p.state_dim, p.input_dim
    _check_step_shapes(LSTM, p, k, m, c_prev.shape, x.shape)
    two_d = c_prev.ndim == 2
    z_gate = np.concatenate([c_prev, h_prev, x], axis=0)
    z_cand = np.concatenate([h_prev, x], axis=0)
    bi = p.b_i[:, None] if two_d else p.b_i
    bf = p.b_f[:, None] if two_d else p.b_f
    bo = p.b_o[:, None] if two_d else p.b_o
    bg = p.b_g[:, None] if two_d else p.b_g
    i = numerics.sigmoid(p.w_i @ z_gate + bi)
    f = numerics.sigmoid(p.w_f @ z_gate + bf)
    o = numerics.sigmoid(p.w_o @ z_gate + bo)
    cand = np.tanh(p.w_c @ z_cand + bg)
    c = i * cand + f * c_prev
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = {
        "z_gate": z_gate, "z_cand": z_cand, "i": i, "f": f, "o": o,
        "cand": cand, "c_prev": c_prev, "tanh_c": tanh_c,
    }
    return (c, h), cache


def gru_step_batch(p: GruParams, s_prev: np.ndarray, x: np.ndarray):
    k, m = p.state_dim, p.input_dim
    _check_step_shapes(GRU, p, k, m, s_prev.shape, x.shape)
    two_d = s_prev.ndim == 2
    z_in = np.concatenate([s_prev, x], axis=0)
    bz = p.b_z[:, None] if two_d else p.b_z
    br = p.b_r[:, None] if two_d else p.b_r
    bh = p.b_h[:, None] if two_d else p.b_h
    z = numerics.sigmoid(p.w_z @ z_in + bz)
    r = numerics.sigmoid(p.w_r @ z_in + br)
    reset_s = r * s_prev
    h_in = np.concatenate([reset_s, x], axis=0)
    cand = np.tanh(p.w_h @ h_in + bh)
    s = z * s_prev + (1.0 - z) * cand
    cache = {
        "s_prev": s_prev, "x": x, "z": z, "r": r, "cand": cand,
        "z_in": z_in, "h_in": h_in,
    }
    return s, cache


def pru_step(p: PruParams, s_prev: np.ndarray, x: np.ndarray):
    """One PRU step on a single state/input pair; returns (state, cache)."""
    return pru_step_batch(p, s_prev, x)


def lstm_step(p: LstmParams, state_prev, x: np.ndarray):
    """One LSTM step on a single ((c, h), input) pair; returns (state, cache)."""
    return lstm_step_batch(p, state_prev, x)


def gru_step(p: GruParams, s_prev: np.ndarray, x: np.ndarray):
    """One GRU step on a single state/input pair; returns (state, cache)."""
    return gru_step_batch(p, s_prev, x)


STEP_FNS = {PRU: pru_step_batch, LSTM: lstm_step_batch, GRU: gru_step_batch}


def output_state(kind: str, state) -> np.ndarray:
    """The vector a layer exposes upward/to the readout (h for LSTM)."""
    return state[1] if kind == LSTM else state


def readout(r: ReadoutParams, s: np.ndarray) -> np.ndarray:
    """Apply the readout y = h(w @ s + b); for LSTM pass the h vector."""
    return numerics.apply_activation(r.h, numerics.affine(r.w, s, r.b))


def unroll(
    kind: str,
    params,
    readout_params: ReadoutParams,
    xs: Sequence[np.ndarray],
    emit: str = FINAL_ONLY,
):
    """Run a single cell over a sequence from the zero initial state.

    Returns (states, outputs, caches); `outputs` holds the readout of
    every step or only the final one, per `emit`.
    """
    if len(xs) == 0:
        raise ShapeError("unroll requires a non-empty input sequence")
    if emit not in (FINAL_ONLY, EVERY_STEP):
        raise ValueError(f"unknown emit policy {emit!r}")
    step = STEP_FNS[kind]
    state = zero_state(kind, params.state_dim)
    states, caches, outputs = [], [], []
    for t, x in enumerate(xs, start=1):
        try:
            state, cache = step(params, state, np.asarray(x, dtype=np.float64))
        except ShapeError as e:
            raise ShapeError(f"at time step {t}: {e}") from e
        states.append(state)
        caches.append(cache)
        if emit == EVERY_STEP:
            outputs.append(readout(readout_params, output_state(kind, state)))
    if emit == FINAL_ONLY:
        outputs.append(readout(readout_params, output_state(kind, state)))
    return states, outputs, caches


def stack(
    layers: Sequence[tuple],
    readout_params: ReadoutParams,
    xs: Sequence[np.ndarray],
    emit: str = EVERY_STEP,
):
    """Run stacked layers; each layer consumes the one below's per-step state.

    `layers` is a sequence of (kind, params) pairs; the readout applies to
    the top layer only.
    """
    if not layers:
        raise ShapeError("stack requires at least one layer")
    if len(xs) == 0:
        raise ShapeError("stack requires a non-empty input sequence")
    seq = [np.asarray(x, dtype=np.float64) for x in xs]
    for depth, (kind, params) in enumerate(layers):
        if seq[0].shape[0] != params.input_dim:
            raise ShapeError(
                f"layer {depth + 1} expects input dim {params.input_dim}, "
                f"got {seq[0].shape[0]} from below"
            )
        step = STEP_FNS[kind]
        state = zero_state(kind, params.state_dim)
        states = []
        for t, x in enumerate(seq, start=1):
            try:
                state, _ = step(params, state, x)
            except ShapeError as e:
                raise ShapeError(f"at time step {t}: {e}") from e
            states.append(state)
        seq = [output_state(kind, s) for s in states]
    if emit == EVERY_STEP:
        return [readout(readout_params, v) for v in seq]
    if emit == FINAL_ONLY:
        return [readout(readout_params, seq[-1])]
    raise ValueError(f"unknown emit policy {emit!r}")


# ---------------------------------------------------------------------------
# flat serialization: header (kind tag, k, m, l) + little-endian float64 values
# ---------------------------------------------------------------------------


def flatten_cell(params) -> np.ndarray:
    """Parameters as one flat vector, in declared field order."""
    return np.concatenate([getattr(params, f).ravel() for f in params.FIELDS])


def unflatten_cell(kind: str, flat: np.ndarray, k: int, m: int):
    shapes = param_shapes(kind, k, m)
    fields = {}
    pos = 0
    cls = PARAM_CLASSES[kind]
    for name in cls.FIELDS:
        shape = shapes[name]
        size = int(np.prod(shape))
        fields[name] = np.asarray(flat[pos:pos + size], dtype=np.float64).reshape(shape)
        pos += size
    if pos != flat.size:
        raise ShapeError(f"flat vector has {flat.size} values, expected {pos}")
    return cls(**fields)


def save_params(path, kind: str, params, readout_params: ReadoutParams) -> None:
    """Write one cell bundle plus readout as a little-endian flat record."""
    k = params.state_dim
    m = params.input_dim
    l = readout_params.output_dim
    values = np.concatenate(
        [flatten_cell(params), readout_params.w.ravel(), readout_params.b.ravel()]
    )
    with open(path, "wb") as fh:
        fh.write(struct.pack("<IIII", _KIND_TAGS[kind], k, m, l))
        fh.write(values.astype("<f8").tobytes())


def load_params(path, readout_activation: str = numerics.IDENTITY):
    """Read a record written by save_params; returns (kind, params, readout).

    The readout activation is not part of the record (it is fixed by the
    task), so the caller supplies it.
    """
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16:
            raise DataError(f"{path}: truncated header")
        tag, k, m, l = struct.unpack("<IIII", header)
        if tag not in _TAG_KINDS:
            raise DataError(f"{path}: unknown cell kind tag {tag}")
        kind = _TAG_KINDS[tag]
        cell_size = count_params(kind, k, m, l) - l * k - l
        total = cell_size + l * k + l
        raw = fh.read(total * 8)
        if len(raw) != total * 8:
            raise DataError(f"{path}: expected {total} values, file truncated")
    values = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    params = unflatten_cell(kind, values[:cell_size], k, m)
    w = values[cell_size:cell_size + l * k].reshape(l, k)
    b = values[cell_size + l * k:]
    return kind, params, ReadoutParams(w=w, b=b, h=readout_activation)
