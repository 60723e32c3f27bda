"""Losses, exact backpropagation through time, SGD and Adadelta updates,
and parameter initializers.

The forward/backward pass is batched: a mini-batch of same-length
sequences is stored as one (T, m, batch) array and states as (k, batch)
matrices, so every step is a handful of matrix products regardless of
batch size. Gradients are exact reverse-mode derivatives of the
batch-mean loss; they are verified against the central finite-difference
oracle in :mod:`prunet.numerics` (the library's master numerical check).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import cells, numerics
from .cells import LSTM, Model, ReadoutParams
from .errors import NumericError, ShapeError

MSE = "mse"
CEL = "cel"
LOSS_KINDS = (MSE, CEL)

# targets attached to a SequenceBatch
VECTOR_TARGET = "vector"          # (l, batch) regression targets, final step
SCALAR_TARGET = "scalar"          # (batch,) regression targets, final step
STEP_CLASS_TARGET = "step_classes"  # (T, batch) int class per step
CLASS_TARGET = "class_label"      # (batch,) int class, final step

PROB_CLAMP = 1e-12

# running count of cross-entropy probability clamps (softmax underflow)
_clamp_count = 0


def clamp_count() -> int:
    return _clamp_count


def reset_clamp_count() -> None:
    global _clamp_count
    _clamp_count = 0


@dataclass(frozen=True)
class SequenceBatch:
    """A mini-batch of equal-length sequences with per-sequence targets.

    inputs is (T, m, batch); targets and target_kind follow the task:
    vector/scalar regression targets score the final output only, per-step
    class targets score every step, a single class label scores the final
    softmax.
    """

    inputs: np.ndarray
    targets: np.ndarray
    target_kind: str

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[2]

    @property
    def seq_len(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class GradBundle:
    """Gradient arrays shaped exactly like the model parameters."""

    layers: tuple
    readout_w: np.ndarray
    readout_b: np.ndarray


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Squared Euclidean norm of (pred - target) for one example."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(diff @ diff)


def cel_loss(pred_seq: Sequence[np.ndarray], target_seq: Sequence[int]) -> float:
    """Per-step cross entropy, -(1/N) sum_t log pred_t[target_t].

    Probabilities below 1e-12 are clamped (and counted) so softmax
    underflow cannot produce an infinite loss.
    """
    global _clamp_count
    if len(pred_seq) != len(target_seq):
        raise ShapeError(
            f"cel_loss mismatch: {len(pred_seq)} predictions vs "
            f"{len(target_seq)} targets"
        )
    total = 0.0
    for pred, tgt in zip(pred_seq, target_seq):
        p = pred[int(tgt)]
        if p < PROB_CLAMP:
            p = PROB_CLAMP
            _clamp_count += 1
        total -= np.log(p)
    return float(total / len(pred_seq))


def accuracy(pred_labels: Sequence[int], true_labels: Sequence[int]) -> float:
    """Fraction of exact label matches."""
    if len(pred_labels) != len(true_labels):
        raise ShapeError(
            f"accuracy mismatch: {len(pred_labels)} vs {len(true_labels)} labels"
        )
    pred = np.asarray(pred_labels)
    true = np.asarray(true_labels)
    return float(np.mean(pred == true))


# ---------------------------------------------------------------------------
# batched forward/backward
# ---------------------------------------------------------------------------


def readout_forward(r: ReadoutParams, s: np.ndarray) -> np.ndarray:
    """Batched readout on a (k, batch) state block (monkeypatch point in tests)."""
    return numerics.apply_activation(r.h, r.w @ s + r.b[:, None])


def forward_batch(model: Model, inputs: np.ndarray, emit: str):
    """Run the stacked model over a (T, m, batch) input block.

    Returns (outputs, top_states, all_caches) where outputs is a list of
    (l, batch) readout blocks (length T for every_step, 1 for final_only)
    and all_caches[layer][t] holds that step's intermediates.
    """
    t_len, _, batch = inputs.shape
    seq = inputs
    all_caches = []
    top_states = None
    for kind, params in zip(model.kinds, model.layers):
        step = cells.STEP_FNS[kind]
        state = cells.zero_state(kind, params.state_dim, batch)
        caches = []
        outs = np.empty((t_len, params.state_dim, batch))
        for t in range(t_len):
            state, cache = step(params, state, seq[t])
            caches.append(cache)
            outs[t] = cells.output_state(kind, state)
        all_caches.append(caches)
        top_states = outs
        seq = outs
    if emit == cells.EVERY_STEP:
        outputs = [readout_forward(model.readout, top_states[t]) for t in range(t_len)]
    else:
        outputs = [readout_forward(model.readout, top_states[-1])]
    return outputs, top_states, all_caches


def _loss_and_output_grads(model, batch, loss_kind, outputs):
    """Batch-mean loss plus dLoss/d(readout pre-activation or output) per step.

    Returns (loss, step_grads) where step_grads maps time index -> (l, batch)
    gradient already including the readout activation derivative (softmax is
    fused with the cross entropy).
    """
    global _clamp_count
    b = batch.batch_size
    t_len = batch.seq_len
    h = model.readout.h
    step_grads = {}
    if loss_kind == MSE:
        if batch.target_kind == SCALAR_TARGET:
            targets = batch.targets.reshape(1, b)
        elif batch.target_kind == VECTOR_TARGET:
            targets = batch.targets
        else:
            raise ValueError(f"mse loss cannot score {batch.target_kind!r} targets")
        y = outputs[-1]
        diff = y - targets
        loss = float(np.sum(diff * diff) / b)
        dy = 2.0 * diff / b
        if h == numerics.SOFTMAX:
            raise ValueError("mse with softmax readout is not supported")
        step_grads[t_len - 1] = dy * numerics.activation_deriv_from_output(h, y)
        return loss, step_grads
    if loss_kind == CEL:
        if h != numerics.SOFTMAX:
            raise ValueError("cross-entropy training requires a softmax readout")
        if batch.target_kind == STEP_CLASS_TARGET:
            total = 0.0
            for t in range(t_len):
                p = outputs[t]
                idx = batch.targets[t].astype(int)
                picked = p[idx, np.arange(b)]
                low = picked < PROB_CLAMP
                if np.any(low):
                    _clamp_count += int(low.sum())
                    picked = np.maximum(picked, PROB_CLAMP)
                total -= float(np.sum(np.log(picked)))
                grad = p.copy()
                grad[idx, np.arange(b)] -= 1.0
                step_grads[t] = grad / (t_len * b)
            return total / (t_len * b), step_grads
        if batch.target_kind == CLASS_TARGET:
            p = outputs[-1]
            idx = batch.targets.astype(int)
            picked = p[idx, np.arange(b)]
            low = picked < PROB_CLAMP
            if np.any(low):
                _clamp_count += int(low.sum())
                picked = np.maximum(picked, PROB_CLAMP)
            loss = -float(np.sum(np.log(picked))) / b
            grad = p.copy()
            grad[idx, np.arange(b)] -= 1.0
            step_grads[t_len - 1] = grad / b
            return loss, step_grads
        raise ValueError(f"cel loss cannot score {batch.target_kind!r} targets")
    raise ValueError(f"unknown loss kind {loss_kind!r}")


def _zeros_like_cell(params):
    return {name: np.zeros_like(getattr(params, name)) for name in params.FIELDS}


def _pru_backward(params, cache, d_state, grads):
    s_prev, x, u, c = cache["s_prev"], cache["x"], cache["u"], cache["c"]
    dc = d_state * (s_prev - u)
    du = d_state * (1.0 - c)
    ds_prev = d_state * c
    da_u = du * (1.0 - u * u)
    da_c = dc * c * (1.0 - c)
    grads["u_s"] += da_u @ s_prev.T
    grads["u_x"] += da_u @ x.T
    grads["b_u"] += da_u.sum(axis=1)
    grads["c_s"] += da_c @ s_prev.T
    grads["c_x"] += da_c @ x.T
    grads["b_c"] += da_c.sum(axis=1)
    ds_prev += params.u_s.T @ da_u + params.c_s.T @ da_c
    dx = params.u_x.T @ da_u + params.c_x.T @ da_c
    return ds_prev, dx


def _lstm_backward(params, cache, d_state, grads):
    dc_acc, dh = d_state
    k = params.state_dim
    i, f, o = cache["i"], cache["f"], cache["o"]
    cand, c_prev, tanh_c = cache["cand"], cache["c_prev"], cache["tanh_c"]
    z_gate, z_cand = cache["z_gate"], cache["z_cand"]
    do = dh * tanh_c
    dc_tot = dc_acc + dh * o * (1.0 - tanh_c * tanh_c)
    di = dc_tot * cand
    dcand = dc_tot * i
    df = dc_tot * c_prev
    dc_prev = dc_tot * f
    da_i = di * i * (1.0 - i)
    da_f = df * f * (1.0 - f)
    da_o = do * o * (1.0 - o)
    da_g = dcand * (1.0 - cand * cand)
    grads["w_i"] += da_i @ z_gate.T
    grads["w_f"] += da_f @ z_gate.T
    grads["w_o"] += da_o @ z_gate.T
    grads["w_c"] += da_g @ z_cand.T
    grads["b_i"] += da_i.sum(axis=1)
    grads["b_f"] += da_f.sum(axis=1)
    grads["b_o"] += da_o.sum(axis=1)
    grads["b_g"] += da_g.sum(axis=1)
    dz_gate = params.w_i.T @ da_i + params.w_f.T @ da_f + params.w_o.T @ da_o
    dz_cand = params.w_c.T @ da_g
    dc_prev += dz_gate[:k]
    dh_prev = dz_gate[k:2 * k] + dz_cand[:k]
    dx = dz_gate[2 * k:] + dz_cand[k:]
    return (dc_prev, dh_prev), dx


def _gru_backward(params, cache, d_state, grads):
    k = params.state_dim
    s_prev, x = cache["s_prev"], cache["x"]
    z, r, cand = cache["z"], cache["r"], cache["cand"]
    z_in, h_in = cache["z_in"], cache["h_in"]
    dz = d_state * (s_prev - cand)
    dcand = d_state * (1.0 - z)
    ds_prev = d_state * z
    da_h = dcand * (1.0 - cand * cand)
    grads["w_h"] += da_h @ h_in.T
    grads["b_h"] += da_h.sum(axis=1)
    dh_in = params.w_h.T @ da_h
    d_reset = dh_in[:k]
    dx = dh_in[k:]
    dr = d_reset * s_prev
    ds_prev += d_reset * r
    da_z = dz * z * (1.0 - z)
    da_r = dr * r * (1.0 - r)
    grads["w_z"] += da_z @ z_in.T
    grads["b_z"] += da_z.sum(axis=1)
    grads["w_r"] += da_r @ z_in.T
    grads["b_r"] += da_r.sum(axis=1)
    dz_in = params.w_z.T @ da_z + params.w_r.T @ da_r
    ds_prev += dz_in[:k]
    dx += dz_in[k:]
    return ds_prev, dx


_BACKWARD_FNS = {cells.PRU: _pru_backward, LSTM: _lstm_backward, cells.GRU: _gru_backward}


def _zero_dstate(kind, k, batch):
    if kind == LSTM:
        return (np.zeros((k, batch)), np.zeros((k, batch)))
    return np.zeros((k, batch))


def batch_loss(model: Model, batch: SequenceBatch, loss_kind: str) -> float:
    """Forward-only batch-mean loss (what bptt differentiates)."""
    emit = cells.EVERY_STEP if batch.target_kind == STEP_CLASS_TARGET else cells.FINAL_ONLY
    outputs, _, _ = forward_batch(model, batch.inputs, emit)
    loss, _ = _loss_and_output_grads(model, batch, loss_kind, outputs)
    return loss


def _backward_pass(model, batch, step_grads, top_states, all_caches, locate=False):
    t_len = batch.seq_len
    batch_size = batch.batch_size
    r = model.readout
    d_readout_w = np.zeros_like(r.w)
    d_readout_b = np.zeros_like(r.b)
    # dLoss/d(top-layer state) per step, from the readout
    d_upper = np.zeros((t_len, r.w.shape[1], batch_size))
    for t, dz in step_grads.items():
        d_readout_w += dz @ top_states[t].T
        d_readout_b += dz.sum(axis=1)
        d_upper[t] = r.w.T @ dz

    layer_grads = []
    for depth in range(len(model.layers) - 1, -1, -1):
        kind = model.kinds[depth]
        params = model.layers[depth]
        caches = all_caches[depth]
        grads = _zeros_like_cell(params)
        backward = _BACKWARD_FNS[kind]
        d_state = _zero_dstate(kind, params.state_dim, batch_size)
        d_below = np.zeros((t_len, params.input_dim, batch_size))
        for t in range(t_len - 1, -1, -1):
            if kind == LSTM:
                d_state = (d_state[0], d_state[1] + d_upper[t])
            else:
                d_state = d_state + d_upper[t]
            d_state, dx = backward(params, caches[t], d_state, grads)
            d_below[t] = dx
            if locate:
                for name, arr in grads.items():
                    if not np.all(np.isfinite(arr)):
                        raise NumericError(
                            f"non-finite gradient in layer {depth + 1} "
                            f"field {name} at time step {t + 1}"
                        )
        layer_grads.append(PARAM_GRAD_BUILDERS[kind](grads))
        d_upper = d_below

    return GradBundle(
        layers=tuple(reversed(layer_grads)),
        readout_w=d_readout_w,
        readout_b=d_readout_b,
    )


def bptt(model: Model, batch: SequenceBatch, loss_kind: str):
    """Batch-mean loss and its exact gradient for a 1- or 2-layer model.

    Raises NumericError naming the parameter field and time step if any
    gradient component comes out non-finite; no clipping is applied
    anywhere, so blow-ups surface instead of being masked.
    """
    emit = cells.EVERY_STEP if batch.target_kind == STEP_CLASS_TARGET else cells.FINAL_ONLY
    outputs, top_states, all_caches = forward_batch(model, batch.inputs, emit)
    loss, step_grads = _loss_and_output_grads(model, batch, loss_kind, outputs)
    bundle = _backward_pass(model, batch, step_grads, top_states, all_caches)
    try:
        _check_finite(bundle)
    except NumericError:
        # replay with per-step checks to pin down the first bad field/step
        _backward_pass(model, batch, step_grads, top_states, all_caches, locate=True)
        raise
    return loss, bundle


PARAM_GRAD_BUILDERS = {
    kind: (lambda cls: (lambda grads: cls(**grads)))(cls)
    for kind, cls in cells.PARAM_CLASSES.items()
}


def _check_finite(bundle: GradBundle) -> None:
    for i, layer in enumerate(bundle.layers):
        for name in layer.FIELDS:
            if not np.all(np.isfinite(getattr(layer, name))):
                raise NumericError(f"non-finite gradient in layer {i + 1} field {name}")
    if not (np.all(np.isfinite(bundle.readout_w)) and np.all(np.isfinite(bundle.readout_b))):
        raise NumericError("non-finite gradient in readout")


# ---------------------------------------------------------------------------
# flattening (finite-difference checks, serialization order)
# ---------------------------------------------------------------------------


def flatten_model(model: Model) -> np.ndarray:
    parts = [cells.flatten_cell(p) for p in model.layers]
    parts += [model.readout.w.ravel(), model.readout.b.ravel()]
    return np.concatenate(parts)


def flatten_grads(bundle: GradBundle) -> np.ndarray:
    parts = [cells.flatten_cell(g) for g in bundle.layers]
    parts += [bundle.readout_w.ravel(), bundle.readout_b.ravel()]
    return np.concatenate(parts)


def unflatten_model(flat: np.ndarray, template: Model) -> Model:
    layers = []
    pos = 0
    for kind, params in zip(template.kinds, template.layers):
        size = sum(getattr(params, f).size for f in params.FIELDS)
        layers.append(
            cells.unflatten_cell(kind, flat[pos:pos + size], params.state_dim, params.input_dim)
        )
        pos += size
    r = template.readout
    w = flat[pos:pos + r.w.size].reshape(r.w.shape)
    pos += r.w.size
    b = flat[pos:pos + r.b.size].reshape(r.b.shape)
    pos += r.b.size
    if pos != flat.size:
        raise ShapeError(f"flat vector has {flat.size} values, expected {pos}")
    return Model(
        kinds=template.kinds,
        layers=tuple(layers),
        readout=ReadoutParams(w=w, b=b, h=r.h),
    )


# ---------------------------------------------------------------------------
# parameter updates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SgdConfig:
    batch_size: int
    learning_rate: float
    epochs: int


def sgd_step(model: Model, grads: GradBundle, lr: float) -> Model:
    """Plain gradient descent: every parameter moves by -lr * gradient."""
    layers = tuple(
        type(p)(**{f: getattr(p, f) - lr * getattr(g, f) for f in p.FIELDS})
        for p, g in zip(model.layers, grads.layers)
    )
    readout = replace(
        model.readout,
        w=model.readout.w - lr * grads.readout_w,
        b=model.readout.b - lr * grads.readout_b,
    )
    return Model(kinds=model.kinds, layers=layers, readout=readout)


class AdadeltaState:
    """Adadelta accumulators (squared-gradient and squared-update EMAs).

    The update follows the standard accumulator recursions, with the
    task's base learning rate grafted on as a final multiplier of the
    proposed step.
    """

    def __init__(self, model: Model, rho: float = 0.95, eps: float = 1e-6,
                 base_lr: float = 1.0):
        if not 0.0 < rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if eps <= 0 or base_lr <= 0:
            raise ValueError("eps and base_lr must be positive")
        self.rho = rho
        self.eps = eps
        self.base_lr = base_lr
        self.sq_grad = [
            {f: np.zeros_like(getattr(p, f)) for f in p.FIELDS} for p in model.layers
        ]
        self.sq_delta = [
            {f: np.zeros_like(getattr(p, f)) for f in p.FIELDS} for p in model.layers
        ]
        self.sq_grad_readout = {"w": np.zeros_like(model.readout.w),
                                "b": np.zeros_like(model.readout.b)}
        self.sq_delta_readout = {"w": np.zeros_like(model.readout.w),
                                 "b": np.zeros_like(model.readout.b)}

    def _update(self, sq_grad, sq_delta, value, grad):
        sq_grad *= self.rho
        sq_grad += (1.0 - self.rho) * grad * grad
        delta = -np.sqrt(sq_delta + self.eps) / np.sqrt(sq_grad + self.eps) * grad
        sq_delta *= self.rho
        sq_delta += (1.0 - self.rho) * delta * delta
        return value + self.base_lr * delta


def adadelta_step(state: AdadeltaState, model: Model, grads: GradBundle) -> Model:
    """One Adadelta update; mutates the accumulators, returns new parameters."""
    layers = []
    for p, g, sq_g, sq_d in zip(model.layers, grads.layers, state.sq_grad, state.sq_delta):
        fields = {
            f: state._update(sq_g[f], sq_d[f], getattr(p, f), getattr(g, f))
            for f in p.FIELDS
        }
        layers.append(type(p)(**fields))
    readout = replace(
        model.readout,
        w=state._update(state.sq_grad_readout["w"], state.sq_delta_readout["w"],
                        model.readout.w, grads.readout_w),
        b=state._update(state.sq_grad_readout["b"], state.sq_delta_readout["b"],
                        model.readout.b, grads.readout_b),
    )
    return Model(kinds=model.kinds, layers=tuple(layers), readout=readout)


# ---------------------------------------------------------------------------
# initializers
# ---------------------------------------------------------------------------


def _build_cell(kind, k, m, draw):
    shapes = cells.param_shapes(kind, k, m)
    cls = cells.PARAM_CLASSES[kind]
    return cls(**{name: draw(shapes[name]) for name in cls.FIELDS})


def init_gaussian(kind: str, k: int, m: int, l: int, h: str,
                  rng: np.random.Generator):
    """Cell + readout with i.i.d. standard-normal entries."""
    draw = lambda shape: rng.normal(0.0, 1.0, size=shape)
    cell = _build_cell(kind, k, m, draw)
    return cell, ReadoutParams(w=draw((l, k)), b=draw((l,)), h=h)


def init_uniform(kind: str, k: int, m: int, l: int, h: str,
                 lo: float, hi: float, rng: np.random.Generator):
    """Cell + readout with i.i.d. uniform entries on [lo, hi]."""
    if lo > hi:
        raise ValueError(f"uniform bounds reversed: {lo} > {hi}")
    draw = lambda shape: rng.uniform(lo, hi, size=shape)
    cell = _build_cell(kind, k, m, draw)
    return cell, ReadoutParams(w=draw((l, k)), b=draw((l,)), h=h)


def init_model(kind: str, layers: int, k: int, m: int, l: int, h: str,
               scheme: str, rng: np.random.Generator,
               lo: float = -0.1, hi: float = 0.1, scale: float = 1.0) -> Model:
    """Stacked model initializer; layer 1 reads m-dim inputs, upper layers k."""
    if scheme == "gaussian":
        draw = lambda shape: rng.normal(0.0, scale, size=shape)
    elif scheme == "uniform":
        if lo > hi:
            raise ValueError(f"uniform bounds reversed: {lo} > {hi}")
        draw = lambda shape: rng.uniform(lo, hi, size=shape)
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    layer_params = []
    in_dim = m
    for _ in range(layers):
        layer_params.append(_build_cell(kind, k, in_dim, draw))
        in_dim = k
    readout = ReadoutParams(w=draw((l, k)), b=draw((l,)), h=h)
    return Model(kinds=(kind,) * layers, layers=tuple(layer_params), readout=readout)
