"""Small numpy neural-network core: tensors, fused layers, gradients, Adam."""

from .ops import (
    concat,
    conv1d_maxpool,
    cross_entropy,
    dense,
    dense_softmax,
    dropout,
    embed_sequence,
    lstm_forward,
    softmax,
)
from .optim import AdamState, adam_step
from .tensor import GraphError, ParameterSet, Tensor, backward

__all__ = [
    "AdamState",
    "GraphError",
    "ParameterSet",
    "Tensor",
    "adam_step",
    "backward",
    "concat",
    "conv1d_maxpool",
    "cross_entropy",
    "dense",
    "dense_softmax",
    "dropout",
    "embed_sequence",
    "lstm_forward",
    "softmax",
]
