"""Hand-rolled neural-network building blocks (numpy only)."""

from .layers import (
    Conv2D,
    ConvSpec,
    CropToGrid,
    Dense,
    Flatten,
    MaxPool2D,
    Reshape,
    TransposedConv2D,
    apply_activation,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    glorot_uniform,
    max_pool2d,
    max_pool2d_backward,
    transposed_conv2d_backward,
    transposed_conv2d_forward,
)
from .lstm import (
    LstmParams,
    LstmState,
    init_lstm_params,
    lstm_cell_backward,
    lstm_cell_forward,
    lstm_cell_step,
    zero_state,
)
from .serialize import FORMAT_TAG, document_digest, load_model, save_model
from .training import (
    Adam,
    Sgd,
    TrainConfig,
    finite_difference_at,
    finite_difference_gradient,
    make_optimizer,
    minibatch_indices,
    squared_error_mean,
    squared_error_sum,
)

__all__ = [
    "Adam",
    "Conv2D",
    "ConvSpec",
    "CropToGrid",
    "Dense",
    "FORMAT_TAG",
    "Flatten",
    "LstmParams",
    "LstmState",
    "MaxPool2D",
    "Reshape",
    "Sgd",
    "TrainConfig",
    "TransposedConv2D",
    "apply_activation",
    "conv2d_backward",
    "conv2d_forward",
    "dense_backward",
    "dense_forward",
    "document_digest",
    "finite_difference_at",
    "finite_difference_gradient",
    "glorot_uniform",
    "init_lstm_params",
    "load_model",
    "lstm_cell_backward",
    "lstm_cell_forward",
    "lstm_cell_step",
    "make_optimizer",
    "max_pool2d",
    "max_pool2d_backward",
    "minibatch_indices",
    "save_model",
    "squared_error_mean",
    "squared_error_sum",
    "transposed_conv2d_backward",
    "transposed_conv2d_forward",
    "zero_state",
]
