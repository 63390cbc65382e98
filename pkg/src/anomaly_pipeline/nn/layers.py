"""Dense-tensor layer math on numpy arrays.

Implements 2D convolution (cross-correlation form), transposed convolution
(the exact adjoint of the convolution with the same geometry), max pooling,
and dense layers, each with analytic backward passes. Arrays are float64
row-major; spatial tensors are [channels, rows, cols] with an optional
leading batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "ConvSpec",
    "conv2d_forward",
    "conv2d_backward",
    "transposed_conv2d_forward",
    "transposed_conv2d_backward",
    "max_pool2d",
    "max_pool2d_backward",
    "dense_forward",
    "dense_backward",
    "apply_activation",
    "activation_grad",
    "Conv2D",
    "TransposedConv2D",
    "MaxPool2D",
    "Dense",
    "Flatten",
    "Reshape",
    "CropToGrid",
]

# ---------------------------------------------------------------------------
# Activations

def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Split by sign so exp() never overflows.
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# name -> (f(z), df(z, y)) where y = f(z) is reused when that is cheaper
_ACTIVATIONS = {
    "sigmoid": (_sigmoid, lambda z, y: y * (1.0 - y)),
    "tanh": (np.tanh, lambda z, y: 1.0 - y * y),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, y: (z > 0).astype(np.float64)),
    "identity": (lambda z: z, lambda z, y: np.ones_like(z)),
}


def apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    """Apply the named activation elementwise."""
    try:
        f, _ = _ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None
    return f(z)


def activation_grad(name: str, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Elementwise derivative of the named activation at pre-activation z (output y)."""
    _, df = _ACTIVATIONS[name]
    return df(z, y)


# ---------------------------------------------------------------------------
# Geometry helpers

PadPair = tuple[int, int]
Pads = tuple[PadPair, PadPair]


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of one convolution: kernel extents, filter count, strides, padding."""

    kernel_rows: int
    kernel_cols: int
    filter_count: int
    stride_rows: int = 1
    stride_cols: int = 1
    padding: int = 0

    def __post_init__(self):
        if min(self.kernel_rows, self.kernel_cols, self.filter_count,
               self.stride_rows, self.stride_cols) < 1:
            raise ValueError(f"kernel/filter/stride fields must be >= 1: {self}")
        if self.padding < 0:
            raise ValueError(f"padding must be >= 0: {self}")

    @property
    def pads(self) -> Pads:
        p = self.padding
        return ((p, p), (p, p))

    def output_extents(self, rows: int, cols: int) -> tuple[int, int]:
        """Output rows/cols for an input of the given extents (floor division)."""
        (pt, pb), (pl, pr) = self.pads
        out_r = (rows - self.kernel_rows + pt + pb) // self.stride_rows + 1
        out_c = (cols - self.kernel_cols + pl + pr) // self.stride_cols + 1
        if out_r < 1 or out_c < 1:
            raise ValueError(
                f"kernel {self.kernel_rows}x{self.kernel_cols} exceeds padded "
                f"input {rows + pt + pb}x{cols + pl + pr}"
            )
        return out_r, out_c

    def transposed_output_extents(self, rows: int, cols: int) -> tuple[int, int]:
        """Output rows/cols of the transposed convolution on the given extents."""
        out_r = (rows - 1) * self.stride_rows + self.kernel_rows - 2 * self.padding
        out_c = (cols - 1) * self.stride_cols + self.kernel_cols - 2 * self.padding
        if out_r < 1 or out_c < 1:
            raise ValueError(f"transposed output extent would be non-positive: {self}")
        return out_r, out_c


def _as_batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ValueError(f"expected [C,H,W] or [B,C,H,W], got shape {x.shape}")


def _strided_windows(x4: np.ndarray, kernel: tuple[int, int],
                     stride: tuple[int, int], pads: Pads) -> np.ndarray:
    """View of all kernel windows: [B, C, out_r, out_c, a, b]."""
    (pt, pb), (pl, pr) = pads
    if pt or pb or pl or pr:
        x4 = np.pad(x4, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    a, b = kernel
    if x4.shape[2] < a or x4.shape[3] < b:
        raise ValueError(
            f"kernel {a}x{b} exceeds padded input {x4.shape[2]}x{x4.shape[3]}"
        )
    win = sliding_window_view(x4, (a, b), axis=(2, 3))
    return win[:, :, :: stride[0], :: stride[1]]


# ---------------------------------------------------------------------------
# Convolution (core accepts per-side padding; ConvSpec exposes the symmetric case)

def _conv_core(x4: np.ndarray, weights: np.ndarray, stride: tuple[int, int],
               pads: Pads) -> np.ndarray:
    sub = _strided_windows(x4, weights.shape[2:], stride, pads)
    return np.einsum("bcijpq,fcpq->bfij", sub, weights, optimize=True)


def _conv_input_grad(grad4: np.ndarray, weights: np.ndarray, stride: tuple[int, int],
                     pads: Pads, input_hw: tuple[int, int]) -> np.ndarray:
    """Adjoint of _conv_core: scatter output-gradient back onto the input grid."""
    batch, _, out_r, out_c = grad4.shape
    channels = weights.shape[1]
    a, b = weights.shape[2:]
    sr, sc = stride
    (pt, pb), (pl, pr) = pads
    h_pad = input_hw[0] + pt + pb
    w_pad = input_hw[1] + pl + pr
    dxp = np.zeros((batch, channels, h_pad, w_pad))
    for p in range(a):
        for q in range(b):
            contrib = np.einsum("bfij,fc->bcij", grad4, weights[:, :, p, q], optimize=True)
            dxp[:, :, p : p + sr * out_r : sr, q : q + sc * out_c : sc] += contrib
    return dxp[:, :, pt : h_pad - pb, pl : w_pad - pr]


def _conv_weight_grad(grad4: np.ndarray, x4: np.ndarray, kernel: tuple[int, int],
                      stride: tuple[int, int], pads: Pads) -> np.ndarray:
    sub = _strided_windows(x4, kernel, stride, pads)
    return np.einsum("bfij,bcijpq->fcpq", grad4, sub, optimize=True)


def conv2d_forward(x: np.ndarray, spec: ConvSpec, weights: np.ndarray,
                   biases: np.ndarray) -> np.ndarray:
    """2D convolution of x with the spec's geometry.

    Args:
        x: input [C, H, W] or [B, C, H, W].
        weights: [filter_count, C, kernel_rows, kernel_cols].
        biases: [filter_count], added per output filter.

    Returns:
        [F, out_r, out_c] (or batched), out extents per the stride/padding
        shape law with floor division.
    """
    _check_conv_shapes(spec, weights, biases)
    x4, squeeze = _as_batched(x)
    y = _conv_core(x4, weights, (spec.stride_rows, spec.stride_cols), spec.pads)
    y += biases[None, :, None, None]
    return y[0] if squeeze else y


def conv2d_backward(grad_out: np.ndarray, x: np.ndarray, spec: ConvSpec,
                    weights: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d_forward w.r.t. input, weights, and biases.

    grad_out and x must pair with the shapes of the forward call.
    Returns (grad_x, grad_weights, grad_biases).
    """
    x4, squeeze = _as_batched(x)
    g4, _ = _as_batched(grad_out)
    if g4.shape[0] != x4.shape[0]:
        raise ValueError(f"batch mismatch: grad {g4.shape} vs input {x4.shape}")
    stride = (spec.stride_rows, spec.stride_cols)
    expected = spec.output_extents(x4.shape[2], x4.shape[3])
    if g4.shape[1:] != (spec.filter_count, *expected):
        raise ValueError(f"gradient shape {g4.shape[1:]} does not match forward "
                         f"output {(spec.filter_count, *expected)}")
    grad_x = _conv_input_grad(g4, weights, stride, spec.pads, x4.shape[2:])
    grad_w = _conv_weight_grad(g4, x4, weights.shape[2:], stride, spec.pads)
    grad_b = g4.sum(axis=(0, 2, 3))
    return (grad_x[0] if squeeze else grad_x), grad_w, grad_b


def _check_conv_shapes(spec: ConvSpec, weights: np.ndarray, biases: np.ndarray):
    if weights.ndim != 4 or weights.shape[0] != spec.filter_count \
            or weights.shape[2:] != (spec.kernel_rows, spec.kernel_cols):
        raise ValueError(f"weights shape {weights.shape} does not match {spec}")
    if biases.shape != (spec.filter_count,):
        raise ValueError(f"biases shape {biases.shape} != ({spec.filter_count},)")


# ---------------------------------------------------------------------------
# Transposed convolution

def transposed_conv2d_forward(x: np.ndarray, spec: ConvSpec, weights: np.ndarray,
                              biases: np.ndarray) -> np.ndarray:
    """Adjoint of conv2d_forward with the same spec and weights.

    Maps a [filter_count, H, W] input back to [C, out_r, out_c] where the
    output extent per axis is (in - 1) * stride + kernel - 2 * padding.
    biases has one entry per *output* channel C.
    """
    _check_conv_shapes(spec, weights, np.zeros(spec.filter_count))
    x4, squeeze = _as_batched(x)
    if x4.shape[1] != spec.filter_count:
        raise ValueError(f"input channels {x4.shape[1]} != filter_count {spec.filter_count}")
    channels = weights.shape[1]
    if biases.shape != (channels,):
        raise ValueError(f"biases shape {biases.shape} != ({channels},)")
    out_hw = spec.transposed_output_extents(x4.shape[2], x4.shape[3])
    # The scatter used for the conv input-gradient *is* the transposed map.
    y = _conv_input_grad(x4, weights, (spec.stride_rows, spec.stride_cols),
                         spec.pads, out_hw)
    y += biases[None, :, None, None]
    return y[0] if squeeze else y


def transposed_conv2d_backward(grad_out: np.ndarray, x: np.ndarray, spec: ConvSpec,
                               weights: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of transposed_conv2d_forward. Returns (grad_x, grad_w, grad_b)."""
    x4, squeeze = _as_batched(x)
    g4, _ = _as_batched(grad_out)
    stride = (spec.stride_rows, spec.stride_cols)
    # Gathering from the (re-padded) output gradient inverts the scatter.
    grad_x = _conv_core(g4, weights, stride, spec.pads)
    grad_w = np.einsum(
        "bfij,bcijpq->fcpq",
        x4,
        _strided_windows(g4, weights.shape[2:], stride, spec.pads),
        optimize=True,
    )
    grad_b = g4.sum(axis=(0, 2, 3))
    return (grad_x[0] if squeeze else grad_x), grad_w, grad_b


# ---------------------------------------------------------------------------
# Max pooling

def max_pool2d(x: np.ndarray, window: tuple[int, int],
               stride: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Max over each window; also returns flat-in-window argmax for backward routing.

    Ties resolve to the first (row-major) position in the window, so the
    gradient route is deterministic.
    """
    x4, squeeze = _as_batched(x)
    if window[0] > x4.shape[2] or window[1] > x4.shape[3]:
        raise ValueError(f"pool window {window} larger than input {x4.shape[2:]}")
    sub = _strided_windows(x4, window, stride, ((0, 0), (0, 0)))
    flat = sub.reshape(*sub.shape[:4], -1)
    idx = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    if squeeze:
        return y[0], idx[0]
    return y, idx


def max_pool2d_backward(grad_out: np.ndarray, idx: np.ndarray, input_shape: tuple,
                        window: tuple[int, int], stride: tuple[int, int]) -> np.ndarray:
    """Route each output gradient to the cell that produced the max."""
    squeeze = len(input_shape) == 3
    if squeeze:
        grad_out, idx = grad_out[None], idx[None]
        input_shape = (1, *input_shape)
    batch, channels, out_r, out_c = grad_out.shape
    bi, ci, ri, cj = np.indices((batch, channels, out_r, out_c))
    rows = ri * stride[0] + idx // window[1]
    cols = cj * stride[1] + idx % window[1]
    grad_x = np.zeros(input_shape)
    np.add.at(grad_x, (bi, ci, rows, cols), grad_out)
    return grad_x[0] if squeeze else grad_x


# ---------------------------------------------------------------------------
# Dense

def dense_forward(x: np.ndarray, weights: np.ndarray, biases: np.ndarray,
                  activation: str = "identity") -> np.ndarray:
    """s(W x + b) for a single vector [n] or a batch [B, n]; W is [m, n]."""
    if weights.shape[1] != x.shape[-1]:
        raise ValueError(f"weight columns {weights.shape[1]} != input length {x.shape[-1]}")
    z = x @ weights.T + biases
    return apply_activation(activation, z)


def dense_backward(grad_out: np.ndarray, x: np.ndarray, weights: np.ndarray,
                   biases: np.ndarray, activation: str = "identity",
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of dense_forward. Returns (grad_x, grad_w, grad_b)."""
    z = x @ weights.T + biases
    y = apply_activation(activation, z)
    dz = grad_out * activation_grad(activation, z, y)
    if x.ndim == 1:
        return dz @ weights, np.outer(dz, x), dz
    return dz @ weights, dz.T @ x, dz.sum(axis=0)


# ---------------------------------------------------------------------------
# Composable layers (thin stateful wrappers over the functions above)

def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...],
                   fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform init in +/- sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Forward/backward unit with named parameters and matching gradients."""

    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv2D(Layer):
    """Convolution layer; `padding` may be an int or per-side ((top,bottom),(left,right))."""

    def __init__(self, in_channels: int, filters: int, kernel: tuple[int, int],
                 rng: np.random.Generator, stride: tuple[int, int] = (1, 1),
                 padding: int | Pads = 0, activation: str = "identity"):
        super().__init__()
        self.spec = ConvSpec(kernel[0], kernel[1], filters, stride[0], stride[1],
                             padding if isinstance(padding, int) else 0)
        self.pads: Pads = self.spec.pads if isinstance(padding, int) else padding
        self.activation = activation
        fan_in = in_channels * kernel[0] * kernel[1]
        fan_out = filters * kernel[0] * kernel[1]
        self.params = {
            "w": glorot_uniform(rng, (filters, in_channels, *kernel), fan_in, fan_out),
            "b": np.zeros(filters),
        }
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x4, squeeze = _as_batched(x)
        stride = (self.spec.stride_rows, self.spec.stride_cols)
        z = _conv_core(x4, self.params["w"], stride, self.pads)
        z += self.params["b"][None, :, None, None]
        y = apply_activation(self.activation, z)
        self._cache = (x4, z, y, squeeze)
        return y[0] if squeeze else y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x4, z, y, squeeze = self._cache
        g4 = grad_out[None] if squeeze else grad_out
        dz = g4 * activation_grad(self.activation, z, y)
        stride = (self.spec.stride_rows, self.spec.stride_cols)
        self.grads = {
            "w": _conv_weight_grad(dz, x4, self.params["w"].shape[2:], stride, self.pads),
            "b": dz.sum(axis=(0, 2, 3)),
        }
        grad_x = _conv_input_grad(dz, self.params["w"], stride, self.pads, x4.shape[2:])
        return grad_x[0] if squeeze else grad_x


class TransposedConv2D(Layer):
    def __init__(self, in_channels: int, out_channels: int, kernel: tuple[int, int],
                 rng: np.random.Generator, stride: tuple[int, int] = (1, 1),
                 padding: int = 0, activation: str = "identity"):
        super().__init__()
        self.spec = ConvSpec(kernel[0], kernel[1], in_channels, stride[0], stride[1], padding)
        self.activation = activation
        fan_in = in_channels * kernel[0] * kernel[1]
        fan_out = out_channels * kernel[0] * kernel[1]
        self.params = {
            "w": glorot_uniform(rng, (in_channels, out_channels, *kernel), fan_in, fan_out),
            "b": np.zeros(out_channels),
        }
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        z = transposed_conv2d_forward(x, self.spec, self.params["w"], self.params["b"])
        y = apply_activation(self.activation, z)
        self._cache = (x, z, y)
        return y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, z, y = self._cache
        dz = grad_out * activation_grad(self.activation, z, y)
        grad_x, grad_w, grad_b = transposed_conv2d_backward(dz, x, self.spec, self.params["w"])
        self.grads = {"w": grad_w, "b": grad_b}
        return grad_x


class MaxPool2D(Layer):
    def __init__(self, window: tuple[int, int], stride: tuple[int, int]):
        super().__init__()
        self.window = window
        self.stride = stride
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, idx = max_pool2d(x, self.window, self.stride)
        self._cache = (x.shape, idx)
        return y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        input_shape, idx = self._cache
        return max_pool2d_backward(grad_out, idx, input_shape, self.window, self.stride)


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 activation: str = "identity"):
        super().__init__()
        self.activation = activation
        self.params = {
            "w": glorot_uniform(rng, (out_dim, in_dim), in_dim, out_dim),
            "b": np.zeros(out_dim),
        }
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        z = x @ self.params["w"].T + self.params["b"]
        y = apply_activation(self.activation, z)
        self._cache = (x, z, y)
        return y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, z, y = self._cache
        dz = grad_out * activation_grad(self.activation, z, y)
        if x.ndim == 1:
            self.grads = {"w": np.outer(dz, x), "b": dz}
        else:
            self.grads = {"w": dz.T @ x, "b": dz.sum(axis=0)}
        return dz @ self.params["w"]


class Flatten(Layer):
    """[B, ...] -> [B, prod(...)]."""

    def __init__(self):
        super().__init__()
        self._shape = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out.reshape(self._shape)


class Reshape(Layer):
    """[B, n] -> [B, *target]."""

    def __init__(self, target: tuple[int, ...]):
        super().__init__()
        self.target = target

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(x.shape[0], *self.target)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out.reshape(grad_out.shape[0], -1)


class CropToGrid(Layer):
    """Keep the top-left rows x cols region; backward zero-pads the trimmed border."""

    def __init__(self, rows: int, cols: int):
        super().__init__()
        self.rows = rows
        self.cols = cols
        self._shape = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-2] < self.rows or x.shape[-1] < self.cols:
            raise ValueError(f"cannot crop {x.shape[-2:]} to {(self.rows, self.cols)}")
        self._shape = x.shape
        return x[..., : self.rows, : self.cols]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        grad_x = np.zeros(self._shape)
        grad_x[..., : self.rows, : self.cols] = grad_out
        return grad_x
