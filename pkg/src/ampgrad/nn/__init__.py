from . import functional
from .archs import (PRESETS, ArchConfig, LayerSpec, ResidualBlockSpec, build_model, get_preset,
                    infer_shapes)
from .layers import (AvgPool, BatchNorm, Conv2d, Flatten, Layer, Linear, MaxPool, Model, ReLU,
                     ResidualAdd, ResidualBlock, SoftmaxCE)

__all__ = [
    "functional", "PRESETS", "ArchConfig", "LayerSpec", "ResidualBlockSpec", "build_model",
    "get_preset", "infer_shapes", "AvgPool", "BatchNorm", "Conv2d", "Flatten", "Layer", "Linear",
    "MaxPool", "Model", "ReLU", "ResidualAdd", "ResidualBlock", "SoftmaxCE",
]
