"""From-scratch CPU CNN: kernels, layers, training."""

from .network import (
    Conv,
    Dense,
    Dropout,
    Flatten,
    MaxPool,
    Network,
    ReLU,
    build_network,
    load_parameters,
    save_parameters,
    sgd_step,
)
from .ops import (
    conv_backward,
    conv_forward,
    dense_backward,
    dense_forward,
    dropout,
    maxpool_backward,
    maxpool_forward,
    softmax_cross_entropy,
)
from .training import RunResult, evaluate, train

__all__ = [
    "Conv", "Dense", "Dropout", "Flatten", "MaxPool", "Network", "ReLU",
    "build_network", "load_parameters", "save_parameters", "sgd_step",
    "conv_backward", "conv_forward", "dense_backward", "dense_forward", "dropout",
    "maxpool_backward", "maxpool_forward", "softmax_cross_entropy",
    "RunResult", "evaluate", "train",
]
