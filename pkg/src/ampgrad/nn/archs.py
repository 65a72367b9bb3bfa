"""Architecture configs, presets and the model builder."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigError
from ..autograd import Kind
from .layers import (AvgPool, BatchNorm, Conv2d, Flatten, Linear, MaxPool, Model, ReLU,
                     ResidualBlock)


@dataclass(frozen=True)
class LayerSpec:
    kind: Kind
    hyper: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ResidualBlockSpec:
    in_ch: int
    out_ch: int
    stride: int = 1
    # None: project only when the shape changes
    downsample: Optional[bool] = None


@dataclass(frozen=True)
class ArchConfig:
    name: str
    input_shape: tuple
    blocks: tuple
    num_classes: int
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1


def conv(in_ch, out_ch, kernel=3, stride=1, pad=1, bias=False):
    return LayerSpec(Kind.CONV2D, dict(in_ch=in_ch, out_ch=out_ch, kernel=kernel, stride=stride,
                                       pad=pad, bias=bias))


def bn(channels):
    return LayerSpec(Kind.BATCHNORM, dict(channels=channels))


def relu():
    return LayerSpec(Kind.RELU)


def maxpool(k=2, stride=None):
    return LayerSpec(Kind.MAXPOOL, dict(k=k, stride=stride or k))


def avgpool(k, stride=None):
    return LayerSpec(Kind.AVGPOOL, dict(k=k, stride=stride or k))


def flatten():
    return LayerSpec(Kind.FLATTEN)


def linear(in_features, out_features, bias=True):
    return LayerSpec(Kind.LINEAR, dict(in_features=in_features, out_features=out_features,
                                       bias=bias))


def _extent(size, k, stride, pad=0):
    return (size + 2 * pad - k) // stride + 1


def infer_shapes(config: ArchConfig) -> list:
    """Output shape (without batch axis) after every block; raises ConfigError on a mismatch."""
    shape = tuple(config.input_shape)
    if not shape or any(int(s) <= 0 for s in shape):
        raise ConfigError(f"{config.name}: invalid input shape {shape}")
    shapes = []
    for i, spec in enumerate(config.blocks):
        where = f"{config.name} block {i}"
        if isinstance(spec, ResidualBlockSpec):
            if len(shape) != 3 or shape[0] != spec.in_ch:
                raise ConfigError(f"{where}: residual block expects {spec.in_ch} channels, got {shape}")
            if min(spec.in_ch, spec.out_ch, spec.stride) <= 0:
                raise ConfigError(f"{where}: extents must be positive")
            needs_proj = spec.stride != 1 or spec.in_ch != spec.out_ch
            if spec.downsample is False and needs_proj:
                raise ConfigError(f"{where}: skip path shape differs from main path; projection required")
            h, w = _extent(shape[1], 3, spec.stride, 1), _extent(shape[2], 3, spec.stride, 1)
            shape = (spec.out_ch, h, w)
        else:
            hp = spec.hyper
            kind = spec.kind
            if kind is Kind.CONV2D:
                if len(shape) != 3 or shape[0] != hp["in_ch"]:
                    raise ConfigError(f"{where}: conv expects {hp['in_ch']} channels, got {shape}")
                if min(hp["out_ch"], hp["kernel"], hp["stride"]) <= 0 or hp["pad"] < 0:
                    raise ConfigError(f"{where}: invalid conv hyper-parameters {hp}")
                shape = (hp["out_ch"], _extent(shape[1], hp["kernel"], hp["stride"], hp["pad"]),
                         _extent(shape[2], hp["kernel"], hp["stride"], hp["pad"]))
            elif kind is Kind.BATCHNORM:
                if shape[0] != hp["channels"]:
                    raise ConfigError(f"{where}: batchnorm over {hp['channels']} channels, got {shape}")
            elif kind in (Kind.MAXPOOL, Kind.AVGPOOL):
                if len(shape) != 3:
                    raise ConfigError(f"{where}: pooling needs a [C, H, W] input, got {shape}")
                shape = (shape[0], _extent(shape[1], hp["k"], hp["stride"]),
                         _extent(shape[2], hp["k"], hp["stride"]))
            elif kind is Kind.FLATTEN:
                shape = (int(np.prod(shape)),)
            elif kind is Kind.LINEAR:
                if len(shape) != 1 or shape[0] != hp["in_features"]:
                    raise ConfigError(f"{where}: linear expects {hp['in_features']} features, got {shape}")
                shape = (hp["out_features"],)
            elif kind is Kind.RELU:
                pass
            else:
                raise ConfigError(f"{where}: unsupported layer kind {kind}")
        if any(s <= 0 for s in shape):
            raise ConfigError(f"{where}: non-positive output extent {shape}")
        shapes.append(shape)
    heads = [s for s in config.blocks if isinstance(s, LayerSpec) and s.kind is Kind.LINEAR]
    last = config.blocks[-1] if config.blocks else None
    if not (isinstance(last, LayerSpec) and last.kind is Kind.LINEAR
            and last.hyper["out_features"] == config.num_classes):
        raise ConfigError(f"{config.name}: must end in exactly one classifier head with "
                          f"{config.num_classes} outputs")
    if sum(1 for s in heads if s.hyper["out_features"] == config.num_classes) != 1:
        raise ConfigError(f"{config.name}: more than one classifier head")
    return shapes


def _kaiming_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(2.0) * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def build_model(config: ArchConfig, seed: int, dtype=np.float32) -> Model:
    """Instantiate ``config`` with Kaiming-uniform weights, zero biases, BN gamma=1, beta=0."""
    infer_shapes(config)
    eps, mom = config.bn_eps, config.bn_momentum
    items = []
    for spec in config.blocks:
        if isinstance(spec, ResidualBlockSpec):
            items.append(ResidualBlock(spec.in_ch, spec.out_ch, spec.stride, spec.downsample,
                                       eps, mom, dtype=dtype))
            continue
        hp = spec.hyper
        if spec.kind is Kind.CONV2D:
            items.append(Conv2d(hp["in_ch"], hp["out_ch"], hp["kernel"], hp["stride"], hp["pad"],
                                hp.get("bias", False), dtype=dtype))
        elif spec.kind is Kind.BATCHNORM:
            items.append(BatchNorm(hp["channels"], eps, mom, dtype=dtype))
        elif spec.kind is Kind.RELU:
            items.append(ReLU())
        elif spec.kind is Kind.MAXPOOL:
            items.append(MaxPool(hp["k"], hp["stride"]))
        elif spec.kind is Kind.AVGPOOL:
            items.append(AvgPool(hp["k"], hp["stride"]))
        elif spec.kind is Kind.FLATTEN:
            items.append(Flatten())
        elif spec.kind is Kind.LINEAR:
            items.append(Linear(hp["in_features"], hp["out_features"], hp.get("bias", True),
                                dtype=dtype))
    model = Model(config.name, items, config.num_classes, dtype=dtype)
    rng = np.random.Generator(np.random.PCG64(seed))
    for layer in model.modules():
        if isinstance(layer, (Conv2d, Linear)):
            w = layer.weight
            fan_in = int(np.prod(w.shape[1:]))
            w.data[...] = _kaiming_uniform(rng, w.shape, fan_in, dtype)
    model.config = config
    return model


# -- presets -----------------------------------------------------------------

def mlp_tiny(input_shape=(8,), num_classes=2, hidden=16) -> ArchConfig:
    features = int(np.prod(input_shape))
    blocks = [flatten()] if len(input_shape) > 1 else []
    blocks += [linear(features, hidden), bn(hidden), relu(),
               linear(hidden, hidden), bn(hidden), relu(),
               linear(hidden, num_classes)]
    return ArchConfig("mlp-tiny", tuple(input_shape), tuple(blocks), num_classes)


def cnn_small(input_shape=(3, 32, 32), num_classes=10, widths=(16, 32, 64)) -> ArchConfig:
    c, h, w = input_shape
    blocks = []
    for width in widths:
        blocks += [conv(c, width), bn(width), relu(), maxpool(2)]
        c, h, w = width, h // 2, w // 2
    blocks += [flatten(), linear(c * h * w, num_classes)]
    return ArchConfig("cnn-small", tuple(input_shape), tuple(blocks), num_classes)


VGG19_LAYOUT = (64, 64, "M", 128, 128, "M", 256, 256, 256, 256, "M",
                512, 512, 512, 512, "M", 512, 512, 512, 512, "M")


def vgg19_cifar(input_shape=(3, 32, 32), num_classes=10) -> ArchConfig:
    c, h, w = input_shape
    blocks = []
    for item in VGG19_LAYOUT:
        if item == "M":
            blocks.append(maxpool(2))
            h, w = h // 2, w // 2
        else:
            blocks += [conv(c, item), bn(item), relu()]
            c = item
    blocks += [flatten(), linear(c * h * w, num_classes)]
    return ArchConfig("vgg19-cifar", tuple(input_shape), tuple(blocks), num_classes)


def _resnet(name, stage_blocks, input_shape, num_classes) -> ArchConfig:
    c, h, w = input_shape
    blocks = [conv(c, 64), bn(64), relu()]
    in_ch = 64
    for stage, (width, count) in enumerate(zip((64, 128, 256, 512), stage_blocks)):
        for j in range(count):
            stride = 2 if stage > 0 and j == 0 else 1
            blocks.append(ResidualBlockSpec(in_ch, width, stride))
            in_ch = width
            if stride == 2:
                h, w = (h + 1) // 2, (w + 1) // 2
    blocks += [avgpool(h), flatten(), linear(in_ch, num_classes)]
    return ArchConfig(name, tuple(input_shape), tuple(blocks), num_classes)


def resnet18_cifar(input_shape=(3, 32, 32), num_classes=10) -> ArchConfig:
    return _resnet("resnet18-cifar", (2, 2, 2, 2), input_shape, num_classes)


def resnet34_cifar(input_shape=(3, 32, 32), num_classes=10) -> ArchConfig:
    return _resnet("resnet34-cifar", (3, 4, 6, 3), input_shape, num_classes)


PRESETS = {
    "mlp-tiny": mlp_tiny,
    "cnn-small": cnn_small,
    "vgg19-cifar": vgg19_cifar,
    "resnet18-cifar": resnet18_cifar,
    "resnet34-cifar": resnet34_cifar,
}


def get_preset(name: str, **kwargs) -> ArchConfig:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown architecture {name!r}; choose from {sorted(PRESETS)}")
    return factory(**kwargs)


