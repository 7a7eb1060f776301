from keyscope.nn.layers import (
    BatchNorm2D,
    BatchNormState,
    Conv2D,
    Dense,
    Elu,
    FrameDense,
    GlobalAvgPool,
    Layer,
    MaxPool2x2,
    SpatialDropout,
    TimeAvgPool,
)
from keyscope.nn.losses import softmax, softmax_xent
from keyscope.nn.optim import SgdState, sgd_step
from keyscope.nn.rng import RngStream
from keyscope.nn.tensor import Parameter

__all__ = [
    "BatchNorm2D",
    "BatchNormState",
    "Conv2D",
    "Dense",
    "Elu",
    "FrameDense",
    "GlobalAvgPool",
    "Layer",
    "MaxPool2x2",
    "Parameter",
    "RngStream",
    "SgdState",
    "SpatialDropout",
    "TimeAvgPool",
    "sgd_step",
    "softmax",
    "softmax_xent",
]
