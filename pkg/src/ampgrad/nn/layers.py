"""Layer objects and the model container.

A layer owns its parameters, a unique ``layer_id`` and an optional
``grad_transform``. Calling a layer records one graph node carrying both.
"""
from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from ..autograd import Kind, Tensor, no_grad
from . import functional as F


def _param(data: np.ndarray, name: str) -> Tensor:
    t = Tensor(data, requires_grad=True, name=name)
    t.is_param = True
    return t


class Layer:
    kind: Kind

    def __init__(self):
        self.layer_id: Optional[int] = None
        self.grad_transform: Optional[float] = None

    def parameters(self) -> list:
        return []

    def named_parameters(self) -> list:
        return [(f"layer{self.layer_id}.{p.name}", p) for p in self.parameters()]

    def named_buffers(self) -> list:
        return []

    def modules(self) -> Iterator["Layer"]:
        yield self

    def __call__(self, x: Tensor, training: bool = False) -> Tensor:
        raise NotImplementedError

    def __repr__(self):
        extra = f", grad_transform={self.grad_transform}" if self.grad_transform else ""
        return f"{type(self).__name__}(layer_id={self.layer_id}{extra})"


class Linear(Layer):
    kind = Kind.LINEAR

    def __init__(self, in_features: int, out_features: int, bias: bool = True,
                 dtype=np.float32):
        super().__init__()
        self.in_features, self.out_features = in_features, out_features
        self.weight = _param(np.zeros((out_features, in_features), dtype=dtype), "weight")
        self.bias = _param(np.zeros(out_features, dtype=dtype), "bias") if bias else None

    def parameters(self):
        return [self.weight] if self.bias is None else [self.weight, self.bias]

    def __call__(self, x, training=False):
        return F.linear(x, self.weight, self.bias, layer=self)


class Conv2d(Layer):
    kind = Kind.CONV2D

    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int = 1, pad: int = 0,
                 bias: bool = False, dtype=np.float32):
        super().__init__()
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.pad = kernel, stride, pad
        self.weight = _param(np.zeros((out_ch, in_ch, kernel, kernel), dtype=dtype), "weight")
        self.bias = _param(np.zeros(out_ch, dtype=dtype), "bias") if bias else None

    def parameters(self):
        return [self.weight] if self.bias is None else [self.weight, self.bias]

    def __call__(self, x, training=False):
        return F.conv2d(x, self.weight, self.bias, self.stride, self.pad, layer=self)


class BatchNorm(Layer):
    kind = Kind.BATCHNORM

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1,
                 dtype=np.float32):
        super().__init__()
        if not 0 < momentum <= 1 or not eps > 0:
            raise ValueError(f"invalid batchnorm hyper-parameters eps={eps}, momentum={momentum}")
        self.channels, self.eps, self.momentum = channels, eps, momentum
        self.gamma = _param(np.ones(channels, dtype=dtype), "gamma")
        self.beta = _param(np.zeros(channels, dtype=dtype), "beta")
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def parameters(self):
        return [self.gamma, self.beta]

    def named_buffers(self):
        return [(f"layer{self.layer_id}.running_mean", self.running_mean),
                (f"layer{self.layer_id}.running_var", self.running_var)]

    def __call__(self, x, training=False):
        return F.batchnorm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                           training, self.momentum, self.eps, layer=self)


class ReLU(Layer):
    kind = Kind.RELU

    def __call__(self, x, training=False):
        return F.relu(x, layer=self)


class MaxPool(Layer):
    kind = Kind.MAXPOOL

    def __init__(self, k: int, stride: Optional[int] = None):
        super().__init__()
        self.k, self.stride = k, stride or k

    def __call__(self, x, training=False):
        return F.maxpool2d(x, self.k, self.stride, layer=self)


class AvgPool(Layer):
    kind = Kind.AVGPOOL

    def __init__(self, k: int, stride: Optional[int] = None):
        super().__init__()
        self.k, self.stride = k, stride or k

    def __call__(self, x, training=False):
        return F.avgpool2d(x, self.k, self.stride, layer=self)


class Flatten(Layer):
    kind = Kind.FLATTEN

    def __call__(self, x, training=False):
        return F.flatten(x, layer=self)


class ResidualAdd(Layer):
    kind = Kind.RESIDUAL_ADD

    def __call__(self, main, skip, training=False):
        return F.residual_add(main, skip, layer=self)


class SoftmaxCE(Layer):
    kind = Kind.SOFTMAX_CE

    def __call__(self, logits, labels):
        return F.softmax_cross_entropy(logits, labels, layer=self)


class ResidualBlock:
    """conv-BN-ReLU, conv-BN, add skip, ReLU; the skip is a 1x1 conv + BN projection when shapes change."""

    def __init__(self, in_ch: int, out_ch: int, stride: int = 1,
                 downsample: Optional[bool] = None, eps: float = 1e-5, momentum: float = 0.1,
                 dtype=np.float32):
        if downsample is None:
            downsample = stride != 1 or in_ch != out_ch
        self.conv1 = Conv2d(in_ch, out_ch, 3, stride, 1, dtype=dtype)
        self.bn1 = BatchNorm(out_ch, eps, momentum, dtype=dtype)
        self.relu1 = ReLU()
        self.conv2 = Conv2d(out_ch, out_ch, 3, 1, 1, dtype=dtype)
        self.bn2 = BatchNorm(out_ch, eps, momentum, dtype=dtype)
        self.ds_conv = Conv2d(in_ch, out_ch, 1, stride, 0, dtype=dtype) if downsample else None
        self.ds_bn = BatchNorm(out_ch, eps, momentum, dtype=dtype) if downsample else None
        self.add = ResidualAdd()
        self.relu2 = ReLU()

    @property
    def bn_positions(self) -> tuple:
        return (self.bn1.layer_id, self.bn2.layer_id)

    @property
    def downsample_bn_ids(self) -> tuple:
        return () if self.ds_bn is None else (self.ds_bn.layer_id,)

    def modules(self) -> Iterator[Layer]:
        yield from (self.conv1, self.bn1, self.relu1, self.conv2, self.bn2)
        if self.ds_conv is not None:
            yield from (self.ds_conv, self.ds_bn)
        yield from (self.add, self.relu2)

    def parameters(self) -> list:
        return [p for m in self.modules() for p in m.parameters()]

    def __call__(self, x: Tensor, training: bool = False) -> Tensor:
        out = self.relu1(self.bn1(self.conv1(x), training))
        out = self.bn2(self.conv2(out), training)
        skip = x if self.ds_conv is None else self.ds_bn(self.ds_conv(x), training)
        return self.relu2(self.add(out, skip))


class Model:
    """An ordered stack of layers and residual blocks plus the loss layer."""

    def __init__(self, name: str, items: list, num_classes: int, dtype=np.float32):
        self.name = name
        self.items = items
        self.num_classes = num_classes
        self.dtype = np.dtype(dtype)
        self.criterion = SoftmaxCE()
        for i, layer in enumerate(self.modules()):
            layer.layer_id = i

    def modules(self) -> Iterator[Layer]:
        for item in self.items:
            yield from item.modules()
        yield self.criterion

    def blocks(self) -> list:
        return [item for item in self.items if isinstance(item, ResidualBlock)]

    def layer(self, layer_id: int) -> Layer:
        for m in self.modules():
            if m.layer_id == layer_id:
                return m
        raise KeyError(f"no layer with id {layer_id} in model {self.name!r}")

    def parameters(self) -> list:
        return [p for m in self.modules() for p in m.parameters()]

    def named_parameters(self) -> list:
        return [kv for m in self.modules() for kv in m.named_parameters()]

    def named_buffers(self) -> list:
        return [kv for m in self.modules() for kv in m.named_buffers()]

    def state_arrays(self) -> list:
        """(name, array) for every parameter followed by every BN running statistic."""
        return [(n, p.data) for n, p in self.named_parameters()] + self.named_buffers()

    def state_dict(self) -> dict:
        return {name: arr.copy() for name, arr in self.state_arrays()}

    def load_state_dict(self, state: dict) -> None:
        for name, arr in self.state_arrays():
            if name not in state:
                raise KeyError(f"missing entry {name!r}")
            src = np.asarray(state[name])
            if src.shape != arr.shape:
                raise ValueError(f"{name}: shape {src.shape} != {arr.shape}")
            arr[...] = src

    def forward(self, x, training: bool = False) -> Tensor:
        out = x if isinstance(x, Tensor) else Tensor(x, dtype=self.dtype)
        for item in self.items:
            out = item(out, training)
        return out

    __call__ = forward

    def loss(self, logits: Tensor, labels) -> Tensor:
        return self.criterion(logits, labels)

    def predict(self, x) -> np.ndarray:
        with no_grad():
            return self.forward(x, training=False).data.argmax(axis=1)

    def __repr__(self):
        return f"Model({self.name!r}, layers={sum(1 for _ in self.modules())})"
