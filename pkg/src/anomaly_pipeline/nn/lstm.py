"""LSTM cell: forget/input/output gates over a persistent cell memory.

All four gate weight matrices act on the concatenation [h_prev, x_t], so each
is [hidden_size, hidden_size + input_size]. Vectors may carry a leading batch
axis; a single step then advances every sequence in the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import _sigmoid, glorot_uniform

__all__ = ["LstmParams", "LstmState", "init_lstm_params", "zero_state",
           "lstm_cell_step", "lstm_cell_forward", "lstm_cell_backward"]

_GATES = ("f", "i", "c", "o")


@dataclass
class LstmParams:
    """Gate weights/biases; weights rows = hidden_size, cols = hidden_size + input_size."""

    w_f: np.ndarray
    w_i: np.ndarray
    w_c: np.ndarray
    w_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        shapes = {self.w_f.shape, self.w_i.shape, self.w_c.shape, self.w_o.shape}
        if len(shapes) != 1:
            raise ValueError(f"gate weight shapes differ: {shapes}")

    @property
    def hidden_size(self) -> int:
        return self.w_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_f.shape[1] - self.w_f.shape[0]

    def as_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for g in _GATES:
            out[f"{prefix}w_{g}"] = getattr(self, f"w_{g}")
            out[f"{prefix}b_{g}"] = getattr(self, f"b_{g}")
        return out


@dataclass
class LstmState:
    """Cell memory c and output h, each [hidden_size] or [batch, hidden_size]."""

    c: np.ndarray
    h: np.ndarray


def init_lstm_params(rng: np.random.Generator, input_size: int,
                     hidden_size: int) -> LstmParams:
    cols = hidden_size + input_size
    kw = dict(fan_in=cols, fan_out=hidden_size)
    return LstmParams(
        w_f=glorot_uniform(rng, (hidden_size, cols), **kw),
        w_i=glorot_uniform(rng, (hidden_size, cols), **kw),
        w_c=glorot_uniform(rng, (hidden_size, cols), **kw),
        w_o=glorot_uniform(rng, (hidden_size, cols), **kw),
        b_f=np.zeros(hidden_size),
        b_i=np.zeros(hidden_size),
        b_c=np.zeros(hidden_size),
        b_o=np.zeros(hidden_size),
    )


def zero_state(hidden_size: int, batch: int | None = None) -> LstmState:
    shape = (hidden_size,) if batch is None else (batch, hidden_size)
    return LstmState(c=np.zeros(shape), h=np.zeros(shape))


def _check_dims(x_t: np.ndarray, prev: LstmState, params: LstmParams):
    if x_t.shape[-1] != params.input_size:
        raise ValueError(f"input length {x_t.shape[-1]} != expected {params.input_size}")
    if prev.h.shape[-1] != params.hidden_size or prev.c.shape[-1] != params.hidden_size:
        raise ValueError("state size does not match params.hidden_size")


def lstm_cell_forward(x_t: np.ndarray, prev: LstmState, params: LstmParams,
                      ) -> tuple[LstmState, dict]:
    """One gated update; returns the new state plus the cache backward needs."""
    _check_dims(x_t, prev, params)
    zx = np.concatenate([prev.h, x_t], axis=-1)
    f = _sigmoid(zx @ params.w_f.T + params.b_f)
    i = _sigmoid(zx @ params.w_i.T + params.b_i)
    c_tilde = np.tanh(zx @ params.w_c.T + params.b_c)
    o = _sigmoid(zx @ params.w_o.T + params.b_o)
    c = f * prev.c + i * c_tilde
    h = o * np.tanh(c)
    cache = {"zx": zx, "f": f, "i": i, "c_tilde": c_tilde, "o": o,
             "c": c, "c_prev": prev.c}
    return LstmState(c=c, h=h), cache


def lstm_cell_step(x_t: np.ndarray, prev: LstmState, params: LstmParams) -> LstmState:
    """Inference-only step (no cache kept)."""
    state, _ = lstm_cell_forward(x_t, prev, params)
    return state


def lstm_cell_backward(cache: dict, params: LstmParams, grad_h: np.ndarray,
                       grad_c: np.ndarray,
                       ) -> tuple[dict[str, np.ndarray], np.ndarray, np.ndarray, np.ndarray]:
    """Backprop one step.

    Args:
        cache: from lstm_cell_forward.
        grad_h / grad_c: upstream gradients on this step's h and c outputs.

    Returns:
        (param_grads keyed like as_dict(), grad_x, grad_h_prev, grad_c_prev).
    """
    zx, f, i = cache["zx"], cache["f"], cache["i"]
    c_tilde, o, c, c_prev = cache["c_tilde"], cache["o"], cache["c"], cache["c_prev"]
    tc = np.tanh(c)

    d_o = grad_h * tc
    d_c = grad_c + grad_h * o * (1.0 - tc * tc)
    d_f = d_c * c_prev
    d_i = d_c * c_tilde
    d_ct = d_c * i

    # gate pre-activation gradients
    dz = {
        "f": d_f * f * (1.0 - f),
        "i": d_i * i * (1.0 - i),
        "c": d_ct * (1.0 - c_tilde * c_tilde),
        "o": d_o * o * (1.0 - o),
    }
    grads: dict[str, np.ndarray] = {}
    d_zx = np.zeros_like(zx)
    batched = zx.ndim == 2
    for g in _GATES:
        w = getattr(params, f"w_{g}")
        if batched:
            grads[f"w_{g}"] = dz[g].T @ zx
            grads[f"b_{g}"] = dz[g].sum(axis=0)
        else:
            grads[f"w_{g}"] = np.outer(dz[g], zx)
            grads[f"b_{g}"] = dz[g]
        d_zx += dz[g] @ w

    hidden = params.hidden_size
    grad_h_prev = d_zx[..., :hidden]
    grad_x = d_zx[..., hidden:]
    grad_c_prev = d_c * f
    return grads, grad_x, grad_h_prev, grad_c_prev
